"""Constants shared by the compiled and pure-Python Gaussian kernels.

Both backends read the numbers from here so they evaluate the exact same
IEEE-754 operation sequence.
"""

# Philox4x32-10 multipliers and Weyl key increments (Salmon et al., Random123).
PHILOX_M0 = 0xD2511F53
PHILOX_M1 = 0xCD9E8D57
PHILOX_W0 = 0x9E3779B9
PHILOX_W1 = 0xBB67AE85
PHILOX_ROUNDS = 10

# Wichura, Algorithm AS 241 (PPND16), coefficients highest degree first.
CENTRAL_SPLIT = 0.425
TAIL_SPLIT = 5.0
CENTRAL_CONST = 0.180625
INTERMEDIATE_SHIFT = 1.6

CENTRAL_NUM = (
    2509.0809287301226727,
    33430.575583588128105,
    67265.770927008700853,
    45921.953931549871457,
    13731.693765509461125,
    1971.5909503065514427,
    133.14166789178437745,
    3.387132872796366608,
)
CENTRAL_DEN = (
    5226.495278852545925,
    28729.085735721942674,
    39307.89580009271061,
    21213.794301586595867,
    5394.1960214247511077,
    687.1870074920579083,
    42.313330701600911252,
    1.0,
)
INTERMEDIATE_NUM = (
    7.7454501427834140764e-4,
    0.0227238449892691845833,
    0.24178072517745061177,
    1.27045825245236838258,
    3.64784832476320460504,
    5.7694972214606914055,
    4.6303378461565452959,
    1.42343711074968357734,
)
INTERMEDIATE_DEN = (
    1.05075007164441684324e-9,
    5.475938084995344946e-4,
    0.0151986665636164571966,
    0.14810397642748007459,
    0.68976733498510000455,
    1.6763848301838038494,
    2.05319162663775882187,
    1.0,
)
TAIL_NUM = (
    2.01033439929228813265e-7,
    2.71155556874348757815e-5,
    0.0012426609473880784386,
    0.026532189526576123093,
    0.29656057182850489123,
    1.7848265399172913358,
    5.4637849111641143699,
    6.6579046435011037772,
)
TAIL_DEN = (
    2.04426310338993978564e-15,
    1.4215117583164458887e-7,
    1.8463183175100546818e-5,
    7.868691311456132591e-4,
    0.0148753612908506148525,
    0.13692988092273580531,
    0.59983220655588793769,
    1.0,
)

# Natural log on [sqrt(1/2), sqrt(2)) via log(m) = 2*atanh(s), s = (m-1)/(m+1).
# Series coefficients 1/(2k+1), highest degree first; |s|^2 <= 0.0295 so
# twelve terms are below double rounding.
SQRT_HALF = 0.7071067811865476
LN2 = 0.6931471805599453
ATANH_SERIES = tuple(1.0 / (2 * k + 1) for k in range(11, -1, -1))

# 52 random bits mapped to the open interval (0, 1): u = (k + 0.5) * 2**-52.
UNIFORM_SCALE = 2.0**-52
