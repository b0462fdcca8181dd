"""Frozen reference test-set indices for the 348/332/332 corpus.

These lists are shipped verbatim so the reference split is reproducible
independently of the sampler; quadruped and hexapod share one list because
their class sizes match.
"""

HUMANOID_TEST = (
    0, 7, 12, 20, 31, 32, 37, 41, 46, 47, 48, 50, 51, 55, 63, 71, 72, 75, 97,
    104, 111, 113, 122, 124, 128, 132, 133, 144, 149, 154, 155, 158, 161, 163,
    166, 169, 170, 181, 183, 197, 204, 207, 215, 222, 226, 229, 241, 244, 248,
    250, 252, 258, 260, 261, 266, 272, 276, 278, 280, 282, 286, 290, 298, 308,
    312, 313, 316, 320, 327, 342,
)

QUADRUPED_TEST = (
    0, 7, 8, 20, 31, 32, 37, 41, 46, 47, 48, 50, 51, 55, 71, 72, 75, 97, 104,
    111, 113, 122, 124, 128, 132, 133, 144, 149, 154, 155, 158, 161, 163, 166,
    169, 170, 181, 183, 197, 204, 207, 215, 222, 226, 229, 241, 244, 248, 250,
    252, 258, 260, 261, 266, 272, 278, 280, 282, 286, 290, 298, 308, 312, 313,
    316, 320, 327,
)

HEXAPOD_TEST = QUADRUPED_TEST

TEST_INDICES = {
    "humanoid": HUMANOID_TEST,
    "quadruped": QUADRUPED_TEST,
    "hexapod": HEXAPOD_TEST,
}
