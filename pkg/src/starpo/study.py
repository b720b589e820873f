"""Association between abnormal stability metrics and labelled reasoning errors.

Two framings are run for every (error type, metric condition, test):

* ``occurrence``: split samples into abnormal vs normal by the condition's flag
  and compare the error-indicator lists (do abnormal samples err more often?).
* ``distribution``: split samples into error vs non-error and compare the raw
  metric values behind the condition.

``direction`` is +1 when the data lean towards "abnormal goes with the error",
-1 for the opposite, 0 for no difference.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateTest, EmptyStudy
from .metrics import (
    EPS_PE,
    AbnormalityCalibration,
    AbnormalityFlags,
    StabilityScores,
    calibrate_abnormality,
    flag_abnormal,
    stability_scores,
)
from .stats import mann_whitney_u, welch_t_test
from .trajectory import ERROR_TYPES, ErrorLabel, Trajectory

CONDITIONS = ("acf_low", "acf_high", "pe_low")
TESTS = ("t", "mwu")
FRAMINGS = ("occurrence", "distribution")
CSV_COLUMNS = ("error_type", "condition", "test", "p", "direction", "n_abnormal", "n_normal", "significant@alpha")


@dataclass(frozen=True)
class LabeledSample:
    scores: StabilityScores
    flags: AbnormalityFlags
    label: ErrorLabel


@dataclass(frozen=True)
class SignificanceRow:
    error_type: ErrorLabel
    condition: str
    test: str
    framing: str
    p_value: float | None
    direction: int
    n_abnormal: int
    n_normal: int
    rate_abnormal: float | None = None
    rate_normal: float | None = None
    statistic: float | None = None
    note: str = ""

    @property
    def tested(self) -> bool:
        return self.p_value is not None

    def significant(self, alpha: float) -> bool:
        return self.p_value is not None and self.p_value < alpha


@dataclass
class SignificanceReport:
    rows: list[SignificanceRow]
    alpha: float
    study_size: int
    calibration: AbnormalityCalibration | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def row(self, error_type: ErrorLabel, condition: str, test: str, framing: str = "occurrence") -> SignificanceRow:
        for r in self.rows:
            if (r.error_type, r.condition, r.test, r.framing) == (error_type, condition, test, framing):
                return r
        raise KeyError((error_type, condition, test, framing))

    def to_csv(self, framing: str = "occurrence") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            if r.framing != framing:
                continue
            w.writerow(
                [
                    r.error_type.value,
                    r.condition,
                    r.test,
                    "" if r.p_value is None else repr(r.p_value),
                    r.direction,
                    r.n_abnormal,
                    r.n_normal,
                    "untested" if r.p_value is None else str(r.significant(self.alpha)).lower(),
                ]
            )
        return buf.getvalue()

    def to_table(self, framing: str = "occurrence") -> str:
        """Plain-text table with one row per error type, one column per condition."""

        def cell(r: SignificanceRow) -> str:
            if r.p_value is None:
                return "n/a"
            stars = "**" if r.p_value < 0.01 else "*" if r.p_value < self.alpha else ""
            sign = "" if r.direction >= 0 else "(-)"
            return f"{r.p_value:.4f}{stars}{sign}"

        header = ["Error Type", "ACF Low (t / M-W)", "ACF High (t / M-W)", "PE (t-test)", "PE (M-W)"]
        body = []
        for e in ERROR_TYPES:
            g = lambda c, t: self.row(e, c, t, framing)  # noqa: E731
            body.append(
                [
                    e.pretty,
                    f"{cell(g('acf_low', 't'))} / {cell(g('acf_low', 'mwu'))}",
                    f"{cell(g('acf_high', 't'))} / {cell(g('acf_high', 'mwu'))}",
                    cell(g("pe_low", "t")),
                    cell(g("pe_low", "mwu")),
                ]
            )
        widths = [max(len(row[k]) for row in [header] + body) for k in range(len(header))]
        fmt = lambda row: "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()  # noqa: E731
        rule = "-" * len(fmt(header))
        lines = [rule, fmt(header), rule] + [fmt(r) for r in body] + [rule]
        lines.append(f"framing={framing}  alpha={self.alpha}  n={self.study_size}  * p<{self.alpha}  ** p<0.01  (-) abnormal goes with fewer errors")
        return "\n".join(lines) + "\n"


def _flag(flags: AbnormalityFlags, condition: str) -> bool:
    return {
        "acf_low": flags.acf_abnormal_low,
        "acf_high": flags.acf_abnormal_high,
        "pe_low": flags.pe_abnormal_low,
    }[condition]


def _metric(scores: StabilityScores, condition: str) -> float:
    return scores.r_pe if condition == "pe_low" else scores.r_acf


def _sign(x: float) -> int:
    return int(np.sign(x)) if abs(x) > 1e-15 else 0


def _run_test(test: str, a: Sequence[float], b: Sequence[float]) -> tuple[float, float, str]:
    if test == "t":
        try:
            res = welch_t_test(a, b)
        except DegenerateTest:
            return 0.0, 1.0, "degenerate"
        return res.statistic, res.p_value, "degenerate" if res.degenerate else ""
    res = mann_whitney_u(a, b)
    return res.statistic, res.p_value, "degenerate" if res.degenerate else ""


def association_study(samples: Sequence[LabeledSample], alpha: float = 0.05, min_group: int = 2) -> SignificanceReport:
    if not samples:
        raise EmptyStudy("no samples")
    n = len(samples)
    rows: list[SignificanceRow] = []
    for e in ERROR_TYPES:
        is_err = np.array([s.label == e for s in samples], dtype=np.float64)
        for cond in CONDITIONS:
            abnormal = np.array([_flag(s.flags, cond) for s in samples])
            metric = np.array([_metric(s.scores, cond) for s in samples])
            a, b = is_err[abnormal], is_err[~abnormal]
            ra = float(a.mean()) if a.size else None
            rb = float(b.mean()) if b.size else None
            for test in TESTS:
                if a.size < min_group or b.size < min_group:
                    rows.append(SignificanceRow(e, cond, test, "occurrence", None, 0, int(a.size), int(b.size), ra, rb, None, "too few samples"))
                else:
                    stat, p, note = _run_test(test, a, b)
                    rows.append(SignificanceRow(e, cond, test, "occurrence", p, _sign(ra - rb), int(a.size), int(b.size), ra, rb, stat, note))
            err_vals, ok_vals = metric[is_err == 1], metric[is_err == 0]
            for test in TESTS:
                if err_vals.size < min_group or ok_vals.size < min_group:
                    rows.append(SignificanceRow(e, cond, test, "distribution", None, 0, int(err_vals.size), int(ok_vals.size), note="too few samples"))
                    continue
                stat, p, note = _run_test(test, err_vals, ok_vals)
                diff = err_vals.mean() - ok_vals.mean()
                direction = _sign(diff) if cond == "acf_high" else -_sign(diff)
                rows.append(
                    SignificanceRow(e, cond, test, "distribution", p, direction, int(err_vals.size), int(ok_vals.size),
                                    float(err_vals.mean()), float(ok_vals.mean()), stat, note)
                )
    return SignificanceReport(rows, alpha, n)


def label_samples(
    trajectories: Iterable[Trajectory], calib: AbnormalityCalibration, eps_pe: float = EPS_PE
) -> list[LabeledSample]:
    out = []
    for t in trajectories:
        sc = stability_scores(t, eps_pe)
        out.append(LabeledSample(sc, flag_abnormal(sc, calib), t.label or ErrorLabel.NONE))
    return out


def run_validation(
    corpus: Sequence[Trajectory],
    *,
    calib_window: int = 100,
    tail_mass: float = 0.1587,
    alpha: float = 0.05,
    eps_pe: float = EPS_PE,
) -> SignificanceReport:
    """Calibrate on the first ``calib_window`` error-free trajectories, then run the study."""
    stable = [t for t in corpus if (t.label or ErrorLabel.NONE) == ErrorLabel.NONE][:calib_window]
    calib = calibrate_abnormality([stability_scores(t, eps_pe) for t in stable], tail_mass)
    report = association_study(label_samples(corpus, calib, eps_pe), alpha)
    report.calibration = calib
    return report
