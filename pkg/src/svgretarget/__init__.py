"""svgretarget: retarget an exemplar SVG onto a target raster image.

Pipeline stages: segment the target into flat-color components, match them
semantically to exemplar paths, pre-align matched paths with CPD-estimated
affine transforms, fit fresh paths to unmatched components, then optimize
all control points and fill colors against image-level and vector-level
losses.
"""

from .svgcore import ControlPoint, Path, SvgDoc, parse_svg, serialize_svg

__version__ = "0.1.0"

__all__ = ["ControlPoint", "Path", "SvgDoc", "parse_svg", "serialize_svg",
           "__version__"]
