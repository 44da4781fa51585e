"""Published nines-of-reliability tables, transcribed verbatim.

Consistency tables map (benign, correct) -> (cft, [xpaxos for synchrony
2..6], bft).  Availability tables map available -> ({benign: cft}, bft,
xpaxos).  Two cells are kept exactly as printed although they disagree with
both the closed form and the enumeration oracle; see
``KNOWN_PRINTED_ANOMALIES``.
"""

CONSISTENCY_T1 = {
    (3, 2): (2, [3, 4, 4, 4, 4], 5),
    (4, 2): (3, [4, 5, 5, 5, 5], 7),
    (4, 3): (3, [5, 5, 6, 6, 6], 7),
    (5, 2): (4, [5, 6, 6, 6, 6], 9),
    (5, 3): (4, [6, 6, 7, 7, 7], 9),
    (5, 4): (4, [6, 7, 7, 8, 8], 9),
    (6, 2): (5, [6, 7, 7, 7, 7], 11),
    (6, 3): (5, [7, 7, 8, 8, 8], 11),
    (6, 4): (5, [7, 8, 8, 9, 9], 11),
    (6, 5): (5, [7, 8, 9, 9, 10], 11),
    (7, 2): (6, [7, 8, 8, 8, 8], 13),
    (7, 3): (6, [8, 8, 9, 9, 9], 13),
    (7, 4): (6, [8, 9, 9, 10, 10], 13),
    (7, 5): (6, [8, 9, 10, 10, 11], 13),
    (7, 6): (6, [8, 9, 10, 11, 11], 13),
    (8, 2): (7, [8, 9, 9, 9, 9], 15),
    (8, 3): (7, [9, 9, 10, 10, 10], 15),
    (8, 4): (7, [9, 10, 10, 11, 11], 15),
    (8, 5): (7, [9, 10, 11, 11, 12], 15),
    (8, 6): (7, [9, 10, 11, 12, 12], 15),
    (8, 7): (7, [9, 10, 11, 12, 13], 15),
}

CONSISTENCY_T2 = {
    (3, 2): (2, [4, 5, 5, 5, 5], 7),
    (4, 2): (3, [5, 6, 6, 6, 6], 10),
    (4, 3): (3, [6, 7, 8, 8, 8], 10),
    (5, 2): (4, [6, 7, 7, 7, 7], 13),
    (5, 3): (4, [7, 8, 9, 9, 9], 13),
    (5, 4): (4, [7, 9, 10, 11, 11], 13),
    (6, 2): (5, [7, 8, 8, 8, 8], 16),
    (6, 3): (5, [8, 9, 10, 10, 10], 16),
    (6, 4): (5, [8, 10, 11, 12, 12], 16),
    (6, 5): (5, [8, 10, 12, 13, 14], 16),
    (7, 2): (6, [8, 9, 9, 9, 9], 19),
    (7, 3): (6, [9, 19, 11, 11, 11], 19),
    (7, 4): (6, [9, 11, 12, 13, 13], 19),
    (7, 5): (6, [9, 11, 13, 14, 15], 19),
    (7, 6): (6, [9, 11, 13, 15, 16], 19),
    (8, 2): (7, [9, 10, 10, 10, 10], 22),
    (8, 3): (7, [10, 11, 12, 12, 12], 22),
    (8, 4): (7, [10, 12, 13, 14, 14], 22),
    (8, 5): (7, [10, 12, 13, 15, 16], 22),
    (8, 6): (7, [10, 12, 14, 16, 17], 22),
    (8, 7): (7, [10, 12, 14, 16, 18], 22),
}

AVAILABILITY_T1 = {
    2: ({3: 2, 4: 3, 5: 3, 6: 3, 7: 3, 8: 3}, 3, 3),
    3: ({4: 3, 5: 4, 6: 5, 7: 5, 8: 5}, 5, 5),
    4: ({5: 4, 6: 5, 7: 6, 8: 7}, 7, 7),
    5: ({6: 5, 7: 6, 8: 7}, 9, 9),
    6: ({7: 6, 8: 7}, 11, 11),
}

AVAILABILITY_T2 = {
    2: ({3: 2, 4: 3, 5: 4, 6: 4, 7: 4, 8: 5}, 4, 5),
    3: ({4: 3, 5: 4, 6: 5, 7: 6, 8: 7}, 7, 8),
    4: ({5: 4, 6: 5, 7: 6, 8: 7}, 10, 11),
    5: ({6: 5, 7: 6, 8: 7}, 13, 14),
    6: ({7: 6, 8: 7}, 16, 17),
}

SYNCHRONY_COLUMNS = (2, 3, 4, 5, 6)

# (t, 9benign, 9correct, 9synchrony) -> (printed, computed)
KNOWN_PRINTED_ANOMALIES = {
    (2, 7, 3, 3): (19, 10),
    (2, 8, 5, 4): (13, 14),
}
