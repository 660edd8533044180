"""Buffer layout shared by the compiled and pure-Python loss kernels.

The kernel receives one flat scalar buffer (layout below), per-component
property buffers, and flattened role masks. Keep this module in sync with
the literal indices in `_ratio_kernel.pyx`.
"""

# scalar buffer indices
S_T_DD, S_T_DP, S_T_DH, S_T_R0 = 0, 1, 2, 3
S_P_DD, S_P_DP, S_P_DH, S_P_R0 = 4, 5, 6, 7
S_EPS, S_WDIFF, S_WSWELL, S_SWTHR = 8, 9, 10, 11
S_REDMAX, S_REDMIN, S_W1, S_W2 = 12, 13, 14, 15
S_AVM, S_VMAX, S_ABP, S_TMAX, S_GAMMA = 16, 17, 18, 19, 20
N_SCAL = 21

# terms buffer indices (summed in this order to form the total loss)
TERM_RATIO, TERM_DIFF, TERM_PENALTY = 0, 1, 2
TERM_SWELLING, TERM_KINETICS, TERM_ENTROPY = 3, 4, 5
N_TERMS = 6
TERM_NAMES = ("ratio", "diff", "penalty", "swelling", "kinetics", "entropy")

MAX_COMPONENTS_KERNEL = 16
