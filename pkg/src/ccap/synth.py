"""Synthetic two-file dataset generator.

Emits an application CSV (one row per applicant) and a credit-history CSV
(1-24 monthly rows per applicant) under the default schema. The bad-label
probability follows a logistic function of a nonlinear risk score that
plants recoverable structure: an income x delinquency-recency interaction,
a squared income term, a non-monotone age effect, a housing-modulated
income slope, and an employment/income parity term. Tree and ensemble
models can express these by construction while a linear model cannot.

Status tokens are consistent with the planted label: bad applicants carry
at least one token from {2,3,4,5}, good applicants never do but may carry
mild "1" delinquencies whose recency tracks the same latent propensity
that drives the label.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError
from .learners import sigmoid
from .util import spawn_rng

INCOME_TYPES = ["Commercial associate", "Pensioner", "State servant", "Student", "Working"]
HOUSING_TYPES = ["House / apartment", "Municipal apartment", "Rented apartment", "With parents"]
OCCUPATIONS = [
    "Accountants", "Cleaning staff", "Cooking staff", "Core staff", "Drivers",
    "HR staff", "High skill tech staff", "IT staff", "Laborers", "Low-skill laborers",
    "Managers", "Medicine staff", "Private service staff", "Realty agents",
    "Sales staff", "Secretaries", "Security staff", "Waiters/barmen staff",
]
OCCUPATION_MISSING_RATE = 0.3086

APP_HEADER = [
    "ID", "CODE_GENDER", "FLAG_OWN_CAR", "FLAG_OWN_REALTY", "CNT_CHILDREN",
    "AMT_INCOME_TOTAL", "AGE_YEARS", "YEARS_EMPLOYED",
    "NAME_INCOME_TYPE", "NAME_HOUSING_TYPE", "OCCUPATION_TYPE",
]
CREDIT_HEADER = ["ID", "MONTHS_BALANCE", "STATUS"]


def _calibrate_intercept(score: np.ndarray, target: float) -> float:
    lo, hi = -30.0, 30.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if float(np.mean(sigmoid(score + mid))) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate(rows: int, imbalance: float, seed: int):
    """Build the synthetic dataset in memory.

    Returns (app_rows, credit_rows, labels) where the first two are lists
    of CSV cell tuples and labels is the planted 0/1 vector per applicant.
    """
    if rows < 100:
        raise UsageError(f"need at least 100 rows, got {rows}")
    if not 0.0 < imbalance < 0.5:
        raise UsageError(f"imbalance must lie in (0, 0.5), got {imbalance}")
    rng = spawn_rng(seed, "synth")
    n = rows

    # application features
    z_inc = rng.normal(0.0, 1.0, n)
    income = np.round(np.exp(10.8 + 0.6 * z_inc) / 10.0) * 10.0
    age = np.round(rng.uniform(21.0, 68.0, n), 1)
    z_age = (age - 44.5) / 13.6
    emp = np.round(np.minimum(rng.gamma(2.0, 3.5, n), age - 18.0), 1)
    z_emp = (emp - 7.0) / 5.0
    children = np.minimum(rng.poisson(0.4, n), 4)
    gender = np.where(rng.random(n) < 0.55, "F", "M")
    own_car = rng.random(n) < sigmoid(0.6 * z_inc)
    own_realty = rng.random(n) < sigmoid(0.3 + 0.4 * z_inc)

    inc_type = rng.choice(
        ["Commercial associate", "State servant", "Working"], n, p=[0.3, 0.15, 0.55]
    )
    pensioner = (age >= 60.0) & (rng.random(n) < 0.8)
    student = (age < 25.0) & (rng.random(n) < 0.35) & ~pensioner
    inc_type = np.where(pensioner, "Pensioner", inc_type)
    inc_type = np.where(student, "Student", inc_type)

    young = age < 30.0
    housing = np.where(
        young & (rng.random(n) < 0.45),
        "With parents",
        rng.choice(HOUSING_TYPES, n, p=[0.62, 0.1, 0.15, 0.13]),
    )
    occupation = rng.choice(OCCUPATIONS, n)
    occ_missing = rng.random(n) < OCCUPATION_MISSING_RATE

    # latent delinquency propensity; observable only through history recency
    h = sigmoid(-0.7 * z_inc - 0.5 * z_emp + 0.5 * rng.normal(0.0, 1.0, n))

    with_parents = housing == "With parents"
    parity = ((z_emp > 0.0) ^ (z_inc > 0.5)).astype(float)
    age_step = 1.3 * (age < 27.0) + 1.0 * (age > 60.0)
    score = 1.6 * (
        0.22 * (-z_inc)
        + 0.15 * (-z_emp)
        - 0.18 * own_realty.astype(float)
        + 0.10 * children
        + 1.00 * (z_inc * (2.0 * h - 1.0))
        + 0.35 * (z_inc**2 - 1.0)
        + age_step
        + 1.00 * with_parents * (-z_inc)
        + 1.25 * parity
        + 1.20 * (2.0 * h - 1.0)
    )
    intercept = _calibrate_intercept(score, imbalance)
    p_bad = sigmoid(score + intercept)
    labels = (rng.random(n) < p_bad).astype(np.int8)

    # pin the positive count to the exact target, flipping the least
    # surprising rows so the logistic story stays coherent
    target = int(round(n * imbalance))
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(pos) > target:
        drop = pos[np.argsort(p_bad[pos], kind="stable")][: len(pos) - target]
        labels[drop] = 0
    elif len(pos) < target:
        add = neg[np.argsort(-p_bad[neg], kind="stable")][: target - len(pos)]
        labels[add] = 1

    # credit histories
    hist_len = rng.integers(1, 25, n)
    recency = np.floor(
        -np.log(rng.random(n)) * (3.0 * (1.0 - h) ** 2 + 0.25)
    ).astype(np.int64)
    recency = np.minimum(recency, hist_len - 1)
    p_clean = np.clip(0.55 - 0.8 * h, 0.02, 0.55)
    clean = (rng.random(n) < p_clean) & (labels == 0)
    default_token = rng.choice(["2", "3", "4", "5"], n, p=[0.5, 0.25, 0.15, 0.1])

    total = int(hist_len.sum())
    starts = np.zeros(n, dtype=np.int64)
    starts[1:] = np.cumsum(hist_len)[:-1]
    month_back = np.arange(total) - np.repeat(starts, hist_len)  # 0,1,2,... per id
    row_id = np.repeat(np.arange(n), hist_len)

    status = rng.choice(["C", "0", "X"], total, p=[0.55, 0.35, 0.10])
    extra_mild = (
        (month_back > np.repeat(recency, hist_len))
        & (rng.random(total) < 0.25 * np.repeat(h, hist_len))
        & ~np.repeat(clean, hist_len)
    )
    status[extra_mild] = "1"
    at_recency = month_back == np.repeat(recency, hist_len)
    row_label = np.repeat(labels, hist_len)
    status[at_recency & (row_label == 0) & ~np.repeat(clean, hist_len)] = "1"
    bad_cells = at_recency & (row_label == 1)
    status[bad_cells] = np.repeat(default_token, hist_len)[bad_cells]

    app_rows = []
    for i in range(n):
        app_rows.append(
            (
                str(i + 1),
                gender[i],
                "Y" if own_car[i] else "N",
                "Y" if own_realty[i] else "N",
                str(int(children[i])),
                f"{income[i]:.1f}",
                f"{age[i]:.1f}",
                f"{emp[i]:.1f}",
                inc_type[i],
                housing[i],
                "" if occ_missing[i] else occupation[i],
            )
        )
    credit_rows = [
        (str(row_id[j] + 1), str(-int(month_back[j])), status[j]) for j in range(total)
    ]
    return app_rows, credit_rows, labels


def write_files(app_path: str, credit_path: str, rows: int, imbalance: float, seed: int) -> dict:
    """Generate and write both CSVs; returns summary statistics."""
    app_rows, credit_rows, labels = generate(rows, imbalance, seed)
    with open(app_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(APP_HEADER) + "\n")
        for row in app_rows:
            fh.write(",".join(row) + "\n")
    with open(credit_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(CREDIT_HEADER) + "\n")
        for row in credit_rows:
            fh.write(",".join(row) + "\n")
    return {
        "applicants": rows,
        "credit_rows": len(credit_rows),
        "positive_count": int(labels.sum()),
        "positive_rate": float(labels.mean()),
    }
