"""Published pipeline constants.

Each value is defined here once; every dataclass default and the pipeline
configuration refer back to these names.
"""

MASK_WINDOW = 10            # frames intersected to stabilise segmentation
DIRECTION_ALPHA = 0.52      # rad, half-angle about the vertical axis
SMOOTH_WIDTH_S = 0.65       # s, moving-average width
CUTOFF_HZ = 0.496           # Hz, Butterworth lowpass cutoff
EXTREMA_WINDOW_S = 6.0      # s, sliding window for envelope vertices
PEAK_MIN_HEIGHT = 0.496     # normalized units
PEAK_MIN_PROMINENCE = 0.1848
PEAK_MIN_DISTANCE_S = 1.5   # s
BR_WINDOW_S = 60.0          # s, inter-peak interval averaging window

# Not published; chosen defaults.
BUTTERWORTH_ORDER = 4
