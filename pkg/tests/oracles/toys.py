"""Hand-built toy cohorts and hand-set nuisance formulas shared by the
brute-force oracle and the tests that compare the estimators against it.

Nuisance formulas take ``(k, m, v, A, u)`` with ``A`` a dict period -> exposure,
``v`` a fold label (0 outside cross-fitting) and ``u = t - k``.
"""

# Four individuals, baseline M=2, horizon K=3 (tau=3.9).
TOY4 = {
    "M": 2, "K": 3, "tau": 3.9,
    "people": [
        {"A": [0.2, 0.5, 0.9, 0.1, 0.6, 0.3], "X": 3.9, "death": False,
         "events": [0.35, 1.2, 2.05, 3.3]},
        {"A": [0.7, 0.1, 0.4, 0.8, 0.2, 0.5], "X": 2.65, "death": True,
         "events": [0.8, 2.6]},
        {"A": [0.4, 0.9, 0.3, 0.5, 0.7, 0.2], "X": 1.35, "death": True,
         "events": [0.1]},
        {"A": [0.6, 0.3, 0.8, 0.2, 0.4, 0.9], "X": 3.2, "death": True,
         "events": [1.5, 3.05]},
    ],
    "folds": [0, 1, 0, 1],
}

# Three individuals, baseline M=1, horizon K=2 (tau=2.8).
TOY3 = {
    "M": 1, "K": 2, "tau": 2.8,
    "people": [
        {"A": [0.3, 0.8, 0.2, 0.6], "X": 2.8, "death": False, "events": [0.4, 1.7, 2.25]},
        {"A": [0.9, 0.1, 0.7, 0.4], "X": 1.45, "death": True, "events": [0.95]},
        {"A": [0.5, 0.6, 0.3, 0.9], "X": 2.3, "death": True, "events": [1.1, 2.2]},
    ],
}

# Two individuals, one death, for the terminal-effect ratio.
TOY2 = {
    "M": 0, "K": 1, "tau": 1.9,
    "people": [
        {"A": [0.4, 0.7], "X": 1.9, "death": False, "events": []},
        {"A": [0.8, 0.3], "X": 1.6, "death": True, "events": [0.5]},
    ],
}


def exposure(person, M, period):
    return person["A"][period + M]


def toy_mu(k, m, v, A, u):
    prev = A.get(k - m - 1, 0.0)
    return 0.3 + 0.05 * k - 0.04 * m + 0.2 * prev + 0.1 * u + 0.05 * v


def toy_rho(k, m, v, A, u):
    return 0.4 + 0.1 * v + 0.2 * u + 0.15 * A.get(k - m, 0.0)


def zero_mu(k, m, v, A, u):
    return 0.0
