"""Virtual metrology for plasma etch depth.

Predicts SiO2 etch depth either from ICP-RIE process parameters or from RGB
colour features measured on coupon photographs, using a small MLP, an affine
least-squares baseline and MC-Dropout uncertainty.
"""

from etchvm.errors import CalibrationError, DataError, EtchVMError, NumericalError, SingularityError

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "DataError",
    "EtchVMError",
    "NumericalError",
    "SingularityError",
    "__version__",
]
