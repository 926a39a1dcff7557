"""
Monthly event tables of a public and a private insurance cohort, and Cox coefficients fitted on the
national cohort, and published per-insurer crude rates with their case fatality, used to check the
estimators against known results.
"""

# (time, removed, observed, censored, at_risk)
PUBLIC_SYSTEM_EVENTS = [
    (0, 796, 712, 84, 43025),
    (1, 692, 333, 359, 42229),
    (2, 614, 247, 367, 41537),
    (3, 545, 195, 350, 40923),
    (4, 466, 189, 277, 40378),
    (5, 508, 142, 366, 39912),
    (6, 516, 187, 329, 39404),
    (7, 537, 157, 380, 38888),
    (8, 499, 142, 357, 38351),
    (9, 483, 134, 349, 37852),
    (10, 550, 154, 396, 37369),
    (11, 456, 153, 303, 36819),
    (12, 475, 140, 335, 36363),
    (13, 437, 128, 309, 35888),
    (14, 440, 129, 311, 35451),
    (15, 433, 121, 312, 35011),
    (16, 427, 126, 301, 34578),
    (17, 469, 114, 355, 34151),
    (18, 434, 121, 313, 33682),
    (19, 479, 134, 345, 33248),
    (20, 482, 128, 354, 32769),
    (21, 389, 114, 275, 32287),
    (22, 477, 112, 365, 31898),
    (23, 444, 137, 307, 31421),
    (24, 427, 104, 323, 30977),
    (25, 444, 87, 357, 30550),
    (26, 418, 109, 309, 30106),
    (27, 423, 105, 318, 29688),
    (28, 376, 88, 288, 29265),
    (29, 418, 93, 325, 28889),
    (30, 425, 104, 321, 28471),
    (31, 349, 91, 258, 28046),
    (32, 415, 89, 326, 27697),
    (33, 408, 73, 335, 27282),
    (34, 400, 91, 309, 26874),
    (35, 376, 89, 287, 26474),
    (36, 393, 63, 330, 26098),
    (37, 333, 56, 277, 25705),
    (38, 410, 74, 336, 25372),
    (39, 392, 63, 329, 24962),
    (40, 352, 72, 280, 24570),
    (41, 402, 69, 333, 24218),
    (42, 378, 59, 319, 23816),
    (43, 385, 59, 326, 23438),
    (44, 339, 66, 273, 23053),
    (45, 355, 69, 286, 22714),
    (46, 379, 59, 320, 22359),
    (47, 342, 65, 277, 21980),
    (48, 356, 49, 307, 21638),
    (49, 295, 52, 243, 21282),
    (50, 322, 61, 261, 20987),
    (51, 340, 52, 288, 20665),
    (52, 314, 54, 260, 20325),
    (53, 333, 42, 291, 20011),
    (54, 282, 48, 234, 19678),
    (55, 288, 45, 243, 19396),
    (56, 327, 46, 281, 19108),
    (57, 290, 36, 254, 18781),
    (58, 312, 51, 261, 18491),
    (59, 258, 42, 216, 18179),
    (60, 17921, 48, 17873, 17921),
]

PRIVATE_SYSTEM_EVENTS = [
    (0, 70, 64, 6, 11147),
    (1, 143, 33, 110, 11077),
    (2, 140, 14, 126, 10934),
    (3, 143, 31, 112, 10794),
    (4, 109, 29, 80, 10651),
    (5, 141, 20, 121, 10542),
    (6, 105, 23, 82, 10401),
    (7, 94, 13, 81, 10296),
    (8, 107, 17, 90, 10202),
    (9, 110, 15, 95, 10095),
    (10, 101, 17, 84, 9985),
    (11, 83, 12, 71, 9884),
    (12, 104, 11, 93, 9801),
    (13, 119, 15, 104, 9697),
    (14, 112, 17, 95, 9578),
    (15, 119, 9, 110, 9466),
    (16, 132, 20, 112, 9347),
    (17, 112, 15, 97, 9215),
    (18, 116, 15, 101, 9103),
    (19, 129, 19, 110, 8987),
    (20, 99, 15, 84, 8858),
    (21, 78, 11, 67, 8759),
    (22, 96, 11, 85, 8681),
    (23, 68, 13, 55, 8585),
    (24, 117, 23, 94, 8517),
    (25, 121, 9, 112, 8400),
    (26, 126, 16, 110, 8279),
    (27, 113, 16, 97, 8153),
    (28, 116, 11, 105, 8040),
    (29, 133, 12, 121, 7924),
    (30, 110, 4, 106, 7791),
    (31, 112, 10, 102, 7681),
    (32, 119, 18, 101, 7569),
    (33, 115, 10, 105, 7450),
    (34, 127, 9, 118, 7335),
    (35, 76, 10, 66, 7208),
    (36, 126, 7, 119, 7132),
    (37, 109, 18, 91, 7006),
    (38, 120, 13, 107, 6897),
    (39, 88, 11, 77, 6777),
    (40, 85, 10, 75, 6689),
    (41, 95, 14, 81, 6604),
    (42, 96, 6, 90, 6509),
    (43, 102, 14, 88, 6413),
    (44, 105, 19, 86, 6311),
    (45, 90, 10, 80, 6206),
    (46, 119, 8, 111, 6116),
    (47, 76, 8, 68, 5997),
    (48, 109, 8, 101, 5921),
    (49, 105, 7, 98, 5812),
    (50, 101, 8, 93, 5707),
    (51, 122, 12, 110, 5606),
    (52, 67, 6, 61, 5484),
    (53, 86, 8, 78, 5417),
    (54, 81, 8, 73, 5331),
    (55, 97, 6, 91, 5250),
    (56, 73, 6, 67, 5153),
    (57, 94, 6, 88, 5080),
    (58, 91, 11, 80, 4986),
    (59, 68, 11, 57, 4895),
    (60, 4827, 5, 4822, 4827),
]

# fitted on the national cohort; regions not listed and FONASA segments B-D are zero
REFERENCE_COEFFICIENTS = {
    "year": -0.051,
    "age": -6.438,
    "age_squared": 7.119,
    "insurer_fonasa": 0.259,
    "insurer_isapre": -0.285,
    "segment_a": 0.251,
    "region_XV": -0.477,
    "region_II": -0.244,
    "region_V": -0.147,
    "region_RM": -0.203,
    "region_VI": 0.165,
}

# year: (crude incidence, crude mortality, case fatality %) per insurer, rounded as published
INSURER_CRUDE_RATES = {
    "ISAPRE": {
        2007: (36.3, 8.4, 23.3),
        2008: (41.5, 8.0, 19.3),
        2009: (72.3, 9.2, 12.7),
        2010: (66.0, 9.4, 14.3),
        2011: (61.1, 9.8, 16.1),
        2012: (64.2, 8.7, 13.5),
        2013: (63.1, 10.1, 16.0),
        2014: (71.3, 9.7, 13.6),
        2015: (72.9, 11.7, 16.1),
        2016: (84.0, 10.3, 12.2),
        2017: (73.0, 11.3, 15.5),
        2018: (72.3, 11.1, 15.3),
    },
    "FONASA": {
        2007: (46.7, 12.4, 26.5),
        2008: (49.1, 13.0, 26.4),
        2009: (54.9, 15.4, 28.1),
        2010: (50.5, 13.9, 27.4),
        2011: (54.2, 14.7, 27.1),
        2012: (56.4, 15.0, 26.6),
        2013: (57.8, 15.0, 26.0),
        2014: (53.3, 15.5, 29.2),
        2015: (59.1, 16.1, 27.2),
        2016: (57.6, 16.1, 27.9),
        2017: (55.2, 15.5, 28.1),
        2018: (53.6, 15.5, 29.0),
    },
}
