"""On-demand property suites behind ``antiuav check``.

Every case draws from its own seed (``seed + case``), so a failure can be
replayed from the reported seed alone. The implementations under test are
injectable for mutation testing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from antiuav import edl, metric, rdm

__all__ = ["CheckReport", "check_edl", "check_metric", "check_rdm", "eq1_reference", "rdm_reference"]


@dataclass
class CheckReport:
    name: str
    passed: int = 0
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def record(self, seed: int, ok: bool, message: str) -> None:
        if ok:
            self.passed += 1
        else:
            self.failures.append((seed, message))

    def summary(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{self.name}: {status} ({self.passed} passed, {len(self.failures)} failed)"


# --------------------------------------------------------------------------
# edl


def _fd_gradient(loss: Callable, evidence: np.ndarray, label: edl.ClassLabel, step: float) -> np.ndarray:
    # Central differences over the realised step, which differs from ``step``
    # by rounding when the evidence is large.
    grad = np.empty_like(evidence)
    for k in range(evidence.size):
        plus, minus = evidence.copy(), evidence.copy()
        plus[k] += step
        minus[k] -= step
        lp = loss(edl.DirichletEvidence(plus), label)
        lm = loss(edl.DirichletEvidence(minus), label)
        grad[k] = (lp - lm) / (plus[k] - minus[k])
    return grad


def random_evidence(rng: np.random.Generator, num_classes: int) -> np.ndarray:
    """Evidence in [1e-4, 1e3]: half log-uniform, half uniform on [1e-4, 20]."""
    if rng.random() < 0.5:
        return np.exp(rng.uniform(math.log(1e-4), math.log(1e3), num_classes))
    return rng.uniform(1e-4, 20.0, num_classes)


def check_edl(
    cases: int = 10_000,
    seed: int = 0,
    loss: Callable = edl.edl_loss,
    grad: Callable = edl.edl_loss_grad,
    step: float = 1e-6,
    rtol: float = 1e-6,
) -> CheckReport:
    report = CheckReport("edl")
    for case in range(cases):
        case_seed = seed + case
        rng = np.random.default_rng(case_seed)
        k = (2, 3, 5)[case % 3]
        e = random_evidence(rng, k)
        label = edl.ClassLabel.of(int(rng.integers(k)), k)
        ev = edl.DirichletEvidence(e)

        analytic = np.asarray(grad(ev, label), dtype=float)
        numeric = _fd_gradient(loss, e, label, step)
        rel = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-300)
        probs, u = edl.predict(ev)
        ok = bool(
            np.all(rel <= rtol)
            and abs(probs.sum() - 1.0) <= 1e-12
            and 0.0 < u <= 1.0
            and loss(ev, label) >= 0.0
        )
        report.record(case_seed, ok, f"K={k} max relative gradient error {rel.max():.3e}, u={u!r}")
    return report


# --------------------------------------------------------------------------
# metric


def eq1_reference(visible, ious, predicted, alpha: float, beta: float) -> np.longdouble:
    """Literal per-frame transcription of the Acc formula in extended precision."""
    ld = np.longdouble
    visible = np.asarray(visible, dtype=bool)
    predicted = np.asarray(predicted, dtype=bool)
    T = ld(visible.size)
    T_star = ld(np.count_nonzero(visible))
    delta = visible.astype(ld)
    iou_t = np.where(predicted, np.asarray(ious, dtype=ld), ld(0))
    p_t = np.where(predicted, ld(0), ld(1))
    first = np.sum((iou_t * delta + p_t * (ld(1) - delta)) / T)
    if T_star == 0:
        return first
    q_t = np.where(~predicted | (iou_t == 0), ld(1), ld(0))
    ratio = np.sum(q_t * delta / T_star)
    return first - ld(alpha) * ratio ** ld(beta)


def random_frame_pattern(rng: np.random.Generator, max_len: int = 500):
    n = int(rng.integers(1, max_len + 1))
    p_vis, p_pred, p_zero = rng.uniform(size=3)
    visible = rng.random(n) < p_vis
    predicted = rng.random(n) < p_pred
    ious = rng.uniform(0.0, 1.0, n)
    ious[rng.random(n) < p_zero * 0.5] = 0.0
    return visible, ious, predicted


def check_metric(
    cases: int = 10_000,
    seed: int = 0,
    evaluate: Callable = metric.evaluate_scores,
    atol: float = 1e-12,
    config: metric.EvalConfig = metric.EvalConfig(),
) -> CheckReport:
    report = CheckReport("metric")
    for case in range(cases):
        case_seed = seed + case
        rng = np.random.default_rng(case_seed)
        visible, ious, predicted = random_frame_pattern(rng)
        result = evaluate(visible, ious, predicted, config)
        expected = eq1_reference(visible, ious, predicted, config.alpha, config.beta)
        err = abs(np.longdouble(result.acc) - expected)
        ok = bool(err <= atol and -config.alpha <= result.acc <= 1.0)
        report.record(case_seed, ok, f"T={visible.size} |acc - reference| = {float(err):.3e}")
    return report


# --------------------------------------------------------------------------
# rdm


def _softmax_row(logits: list[float]) -> list[float]:
    m = max(logits)
    e = [math.exp(v - m) for v in logits]
    s = math.fsum(e)
    return [v / s for v in e]


def _attend(q, k, v):
    d = len(q[0])
    out = []
    for qi in q:
        w = _softmax_row([math.fsum(a * b for a, b in zip(qi, kj)) / math.sqrt(d) for kj in k])
        out.append([math.fsum(w[j] * v[j][c] for j in range(len(v))) for c in range(len(v[0]))])
    return out


def _matmul(a, b):
    return [[math.fsum(a[i][t] * b[t][j] for t in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]


def _mix(tokens, kernel):
    n, d = len(tokens), len(tokens[0])
    side = math.isqrt(n)
    out = []
    for r in range(side):
        for c in range(side):
            row = []
            for ch in range(d):
                acc = []
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        rr, cc = r + dr, c + dc
                        if 0 <= rr < side and 0 <= cc < side:
                            acc.append(kernel[dr + 1][dc + 1][ch] * tokens[rr * side + cc][ch])
                row.append(math.fsum(acc))
            out.append(row)
    return out


def rdm_reference(template: np.ndarray, search: np.ndarray, w: rdm.RdmWeights) -> tuple[np.ndarray, np.ndarray]:
    """Straight-line pure-Python transcription of the block, independent of the numpy path."""
    t_in, s_in = template.tolist(), search.tolist()
    t = _mix(t_in, w.mix_template.tolist())
    s = _mix(s_in, w.mix_search.tolist())
    qt, kt, vt = (_matmul(t, m.tolist()) for m in (w.wq_t, w.wk_t, w.wv_t))
    qs, ks, vs = (_matmul(s, m.tolist()) for m in (w.wq_s, w.wk_s, w.wv_s))
    self_t = _attend(qt, kt, vt)
    self_s = _attend(qs, ks, vs)
    cross = _attend(qs, kt + ks, vt + vs)
    reduced = _matmul([a + b for a, b in zip(self_s, cross)], w.reduce.tolist())
    out_proj = w.out_proj.tolist()

    def fuse(x, f):
        if w.project_then_add:
            proj = _matmul(f, out_proj)
            return [[a + b for a, b in zip(xr, pr)] for xr, pr in zip(x, proj)]
        return _matmul([[a + b for a, b in zip(xr, fr)] for xr, fr in zip(x, f)], out_proj)

    return np.array(fuse(t_in, self_t)), np.array(fuse(s_in, reduced))


def random_qkv(rng: np.random.Generator):
    nq, nk, d = (int(v) for v in rng.integers(1, 12, size=3))
    scale = 10.0 ** rng.uniform(-1, 2)
    q = rng.normal(0, scale, (nq, d))
    k = rng.normal(0, scale, (nk, d))
    v = rng.normal(0, 1, (nk, d))
    return q, k, v


def check_rdm(
    cases: int = 1_000,
    seed: int = 0,
    forward_cases: int = 20,
    forward: Callable = rdm.rdm_forward,
    attention: Callable = rdm.scaled_attention,
) -> CheckReport:
    report = CheckReport("rdm")
    for case in range(cases):
        case_seed = seed + case
        rng = np.random.default_rng(case_seed)
        q, k, v = random_qkv(rng)
        weights = rdm.attention_weights(q, k)
        out = attention(q, k, v)
        row_err = float(np.max(np.abs(weights.sum(axis=1) - 1.0)))
        lo, hi = v.min(axis=0), v.max(axis=0)
        slack = 1e-12 * max(1.0, float(np.abs(v).max()))
        in_hull = bool(np.all(out >= lo - slack) and np.all(out <= hi + slack))

        k_s, v_s = k, v
        empty = np.zeros((0, q.shape[1]))
        cross_empty = rdm.cross_attention_ts(q, empty, k_s, empty, v_s)
        identical = np.array_equal(cross_empty, attention(q, k_s, v_s))
        ok = row_err <= 1e-12 and bool(np.all((weights >= 0) & (weights <= 1))) and in_hull and identical
        report.record(case_seed, ok, f"row-sum error {row_err:.3e}, in envelope {in_hull}, empty-template identity {identical}")

    for case in range(forward_cases):
        case_seed = seed + cases + case
        rng = np.random.default_rng(case_seed)
        d = int(rng.integers(1, 9))
        nt, ns = int(rng.integers(1, 4)) ** 2, int(rng.integers(1, 5)) ** 2
        w = rdm.RdmWeights.random(d, case_seed, project_then_add=bool(case % 2 == 0))
        t = rng.normal(size=(nt, d))
        s = rng.normal(size=(ns, d))
        got_t, got_s = forward(rdm.TokenMatrix(t, rdm.Origin.TEMPLATE), rdm.TokenMatrix(s, rdm.Origin.SEARCH), w)
        ref_t, ref_s = rdm_reference(t, s, w)
        err = max(float(np.max(np.abs(got_t.tokens - ref_t))), float(np.max(np.abs(got_s.tokens - ref_s))))
        report.record(case_seed, err <= 1e-10, f"rdm_forward vs reference max error {err:.3e}")
    return report


CHECKS = {"edl": check_edl, "metric": check_metric, "rdm": check_rdm}
