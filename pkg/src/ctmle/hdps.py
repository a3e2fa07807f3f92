"""High-dimensional propensity-score dimension reduction for claims data.

Pipeline: per-cluster prevalence screening of claim codes, expansion of each
kept code into three recurrence indicators, confounding-impact scoring of
every indicator, and selection of the top-ranked indicators as the design
matrix handed to the estimators.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy import sparse

__all__ = [
    "ClaimMatrix",
    "HdpsCovariate",
    "prevalence_screen",
    "recurrence_expand",
    "bross_score",
    "hdps_pipeline",
    "load_claims_csv",
    "write_hdps_output",
]

KINDS = ("ever", "above_median", "above_q75")


@dataclass
class ClaimMatrix:
    """Sparse nonnegative patient-by-code count matrix with cluster labels."""

    counts: sparse.csr_matrix
    code_ids: tuple
    cluster_of: tuple

    def __post_init__(self):
        counts = sparse.csr_matrix(self.counts)
        if counts.nnz and counts.data.min() < 0:
            raise ValueError("claim counts must be nonnegative")
        if len(self.code_ids) != counts.shape[1]:
            raise ValueError("code_ids must match the number of columns")
        if len(set(self.code_ids)) != len(self.code_ids):
            raise ValueError("code_ids must be unique")
        if len(self.cluster_of) != counts.shape[1]:
            raise ValueError("cluster_of must match the number of columns")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "code_ids", tuple(self.code_ids))
        object.__setattr__(self, "cluster_of", tuple(str(c) for c in self.cluster_of))

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def n_codes(self) -> int:
        return self.counts.shape[1]

    def column(self, j: int) -> np.ndarray:
        return np.asarray(self.counts[:, j].todense()).ravel()


@dataclass
class HdpsCovariate:
    """One expanded binary covariate with its provenance and impact score."""

    source_code: str
    kind: str
    values: np.ndarray
    bross_score: float

    @property
    def name(self) -> str:
        return f"{self.source_code}__{self.kind}"


def prevalence_screen(claims: ClaimMatrix, J: int) -> list:
    """Top-J codes per cluster by min(Pr(c), 1 - Pr(c)), descending.

    Pr(c) is the share of patients with a positive count.  Ties break by
    code label; clusters are visited in sorted label order.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    n = claims.n
    positive = (claims.counts > 0).sum(axis=0)
    prevalence = np.asarray(positive).ravel() / n
    criterion = np.minimum(prevalence, 1.0 - prevalence)
    selected = []
    for cluster in sorted(set(claims.cluster_of)):
        members = [j for j, c in enumerate(claims.cluster_of) if c == cluster]
        members.sort(key=lambda j: (-criterion[j], claims.code_ids[j]))
        selected.extend(claims.code_ids[j] for j in members[:J])
    return selected


def recurrence_expand(counts_for_code) -> tuple:
    """Three recurrence indicators for one code's count vector.

    ever: count > 0; above_median / above_q75: count strictly above the
    median / 75% quantile of all n counts (zeros included), both taken with
    the lower-interpolation convention.
    """
    c = np.asarray(counts_for_code)
    med = np.quantile(c, 0.5, method="lower")
    q75 = np.quantile(c, 0.75, method="lower")
    return ((c > 0).astype(np.int8),
            (c > med).astype(np.int8),
            (c > q75).astype(np.int8))


def bross_score(cvec, a, y) -> float:
    """Potential confounding impact of a binary covariate.

    With pi(a) the covariate prevalence in arm a and r the outcome risk
    ratio across covariate levels, returns
    (pi(1) (r - 1) + 1) / (pi(0) (r - 1) + 1).  NaN when a covariate level
    is empty or the risk ratio is undefined; callers rank such covariates
    last.
    """
    cvec = np.asarray(cvec)
    a = np.asarray(a)
    y = np.asarray(y)
    treated = a == 1
    if not treated.any() or treated.all():
        raise ValueError("both treatment arms must be nonempty")
    n1 = int((cvec == 1).sum())
    n0 = int((cvec == 0).sum())
    if n1 == 0 or n0 == 0:
        return float("nan")
    p1 = float(y[cvec == 1].mean())
    p0 = float(y[cvec == 0].mean())
    if p0 == 0.0:
        return float("nan")
    r = p1 / p0
    pi1 = float(cvec[treated].mean())
    pi0 = float(cvec[~treated].mean())
    return (pi1 * (r - 1.0) + 1.0) / (pi0 * (r - 1.0) + 1.0)


def _rank_strength(score: float, raw: bool) -> float:
    if not np.isfinite(score) or score <= 0:
        return -np.inf
    return score if raw else max(score, 1.0 / score)


def hdps_pipeline(claims: ClaimMatrix, a, y, J: int, K: int,
                  bross_raw: bool = False):
    """Screen, expand, score, and keep the top-K expanded covariates.

    Ranking uses the multiplicative distance from 1, max(score, 1/score),
    so protective covariates rank symmetrically with harmful ones; pass
    bross_raw=True to sort the raw scores descending instead.  Undefined
    scores rank last.  Returns the n-by-K' binary design matrix (K' <= K)
    and the matching list of :class:`HdpsCovariate` provenance records.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    y = np.asarray(y)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("confounding-impact scoring needs a binary outcome")
    kept_codes = prevalence_screen(claims, J)
    idx_of = {code: j for j, code in enumerate(claims.code_ids)}
    expanded = []
    for code in kept_codes:
        col = claims.column(idx_of[code])
        for kind, values in zip(KINDS, recurrence_expand(col)):
            expanded.append(HdpsCovariate(code, kind, values,
                                          bross_score(values, a, y)))
    kind_rank = {kind: i for i, kind in enumerate(KINDS)}
    expanded.sort(key=lambda c: (-_rank_strength(c.bross_score, bross_raw),
                                 c.source_code, kind_rank[c.kind]))
    top = expanded[:K]
    if not top:
        return np.empty((claims.n, 0), dtype=np.int8), []
    matrix = np.column_stack([c.values for c in top])
    return matrix, top


def load_claims_csv(path):
    """Read a long-format claims file (patient_id, code, cluster, count).

    Returns (ClaimMatrix, patient_ids) with patients in sorted-id order and
    codes in sorted-label order.  Repeated (patient, code) rows accumulate.
    """
    patients, codes, clusters, triples = set(), set(), {}, []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"patient_id", "code", "cluster", "count"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: header must contain {sorted(required)}")
        for r, rec in enumerate(reader, start=2):
            pid, code, cluster = rec["patient_id"], rec["code"], rec["cluster"]
            try:
                cnt = int(rec["count"])
            except ValueError:
                raise ValueError(f"{path}: non-integer count at row {r}") from None
            if cnt < 0:
                raise ValueError(f"{path}: negative count at row {r}")
            if code in clusters and clusters[code] != cluster:
                raise ValueError(f"{path}: code {code!r} appears in two clusters")
            clusters[code] = cluster
            patients.add(pid)
            codes.add(code)
            triples.append((pid, code, cnt))
    patient_ids = sorted(patients)
    code_ids = sorted(codes)
    prow = {p: i for i, p in enumerate(patient_ids)}
    pcol = {c: j for j, c in enumerate(code_ids)}
    rows = [prow[p] for p, _, _ in triples]
    cols = [pcol[c] for _, c, _ in triples]
    vals = [v for _, _, v in triples]
    counts = sparse.coo_matrix((vals, (rows, cols)),
                               shape=(len(patient_ids), len(code_ids))).tocsr()
    cm = ClaimMatrix(counts, tuple(code_ids), tuple(clusters[c] for c in code_ids))
    return cm, patient_ids


def write_hdps_output(matrix, covariates, out_csv, provenance_json=None,
                      patient_ids=None):
    """Write the K binary columns as a wide CSV plus a provenance sidecar."""
    names = [c.name for c in covariates]
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = (["patient_id"] if patient_ids is not None else []) + names
        writer.writerow(header)
        for i in range(matrix.shape[0]):
            row = ([patient_ids[i]] if patient_ids is not None else [])
            writer.writerow(row + [int(v) for v in matrix[i]])
    if provenance_json is not None:
        payload = [
            {"column": c.name, "code": c.source_code, "kind": c.kind,
             "bross_score": None if not np.isfinite(c.bross_score)
             else c.bross_score}
            for c in covariates
        ]
        with open(provenance_json, "w") as fh:
            json.dump(payload, fh, indent=2)
