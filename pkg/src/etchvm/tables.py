"""Published measurement rows used as calibration anchors and regression checks.

Values are copied verbatim from the source tables. Only the first two
thickness rows are usable; the remaining published rows have a shifted
first column and are deliberately omitted.
"""

from __future__ import annotations

#: Average SiO2 thickness of the unetched reference coupon, nm.
REFERENCE_THICKNESS_NM = 302.98

PRESSURES_MTORR = (20.0, 30.0, 40.0)
CF4_FLOWS_SCCM = (5.0, 10.0, 15.0, 20.0)
TOP_POWERS_W = (50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0)

# (pressure, cf4, power, nine ellipsometer thicknesses)
THICKNESS_ROWS = (
    (20.0, 5.0, 50.0, (266.2, 265.6, 266.0, 266.2, 266.6, 266.7, 266.4, 266.0, 265.8)),
    (20.0, 10.0, 90.0, (221.4, 220.7, 221.1, 220.0, 219.8, 216.9, 219.0, 218.9, 220.8)),
)

# (pressure, cf4, power, true depth, ANN prediction, linear prediction), nm
PROCESS_VALIDATION_ROWS = (
    (40.0, 15.0, 80.0, -53.70, -57.13, -56.76),
    (20.0, 5.0, 50.0, -36.80, -38.00, -38.65),
    (40.0, 5.0, 70.0, -48.40, -48.70, -46.17),
    (20.0, 20.0, 60.0, -47.00, -48.10, -49.98),
    (20.0, 10.0, 100.0, -94.80, -93.90, -84.97),
    (40.0, 15.0, 50.0, -37.60, -37.02, -29.41),
    (20.0, 10.0, 80.0, -69.10, -66.84, -66.73),
)
PROCESS_REPORTED_MSE = {"ann": 7.33, "linear": 33.94}

# (R, G, B, true depth, ANN prediction, linear prediction)
RGB_VALIDATION_ROWS = (
    (228.8, 151.2, 216.3, -53.70, -52.38, -50.88),
    (248.0, 195.3, 217.0, -36.80, -42.98, -56.46),
    (234.0, 159.9, 218.9, -48.40, -50.94, -52.54),
    (236.8, 163.5, 216.6, -47.00, -46.90, -51.41),
    (224.2, 225.3, 235.1, -94.80, -92.33, -83.37),
    (238.3, 180.6, 206.7, -37.60, -37.18, -51.32),
    (227.2, 170.1, 228.4, -69.10, -64.62, -62.69),
)
RGB_REPORTED_MSE = {"ann": 10.38, "linear": 113.0}

#: MC-Dropout band fractions reported for the two scenarios (1 sigma, 2 sigma only, outside).
REPORTED_COVERAGE = {
    "process": (0.6825, 0.2381, 0.0794),
    "rgb": (0.6316, 0.3487, 0.0197),
}
