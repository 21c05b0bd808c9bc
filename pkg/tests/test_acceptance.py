"""Headline acceptance criteria, one test each, all at their stated tolerances.

Every test records a one-line verdict; ``conftest.py`` prints the collected
lines at the end of the session.
"""

import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from virtcolor import calibration, lowdeg, lowerbound as lb, sketches, trials
from virtcolor.context import Params
from virtcolor.embedding import build_power, power_distance_ok, spider_example
from virtcolor.harness import RunConfig, generate_instance, run_pipeline, verify_run
from virtcolor.harness.corpus import corpus_configs
from virtcolor.harness.generators import gnp_links
from virtcolor.harness.pipeline import _sum_transcript, color_embedding, make_context
from virtcolor.multigraph import UNCOLORED, verify_coloring
from virtcolor.netsim import Network

from conftest import multi_embedding, random_multigraph

RESULTS: list[str] = []

CORPUS_SIZE = 1000
CORPUS_BASE_SEED = 0
WALL_LIMIT_S = 30 * 60


def report(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def corpus():
    cfgs = corpus_configs(CORPUS_SIZE, CORPUS_BASE_SEED)
    t0 = time.perf_counter()
    runs = []
    for cfg in cfgs:
        m = run_pipeline(cfg)
        emb = generate_instance(cfg.kind, cfg.instance, cfg.seed, cfg.bandwidth)
        partial = verify_coloring(emb.H, np.asarray(m.colors, np.int64))
        runs.append((cfg, m, bool(partial), verify_run(m, emb)[0] if m.passed else None))
    return runs, time.perf_counter() - t0


def _monitor_totals(runs, key):
    out: dict[str, int] = {}
    for _, m, _, _ in runs:
        for k, v in m.monitors[key].items():
            out[k] = out.get(k, 0) + v
    return out


# ---------------------------------------------------------------------------


def test_correctness_suite(corpus):
    runs, wall = corpus
    n = len(runs)
    passed = sum(m.passed for _, m, _, _ in runs)
    forced = sum(c.forced_phase for c, _, _, _ in runs)
    proper = sum(p for _, _, p, _ in runs)
    audited = [code for _, m, _, code in runs if code is not None]
    assert max(c.instance.get("n", 0) for c, _, _, _ in runs) <= 4000
    ok = passed >= 0.99 * n and proper == n and all(c == 0 for c in audited) and wall <= WALL_LIMIT_S
    report("correctness suite", ok,
           f"{passed}/{n} total+proper ({forced} forced-phase), {proper}/{n} colorings pass verify, "
           f"{len(audited)} re-audited, wall {wall:.0f}s <= {WALL_LIMIT_S}s")


def test_bandwidth_ledger(corpus, tmp_path):
    runs, _ = corpus
    exceeded = sum(m.bandwidth_exceeded for _, m, _, _ in runs)
    mismatch = sum(m.bits_total != m.transcript_bits for _, m, _, _ in runs)
    # independent re-sum of on-disk transcripts for a spread of runs
    files_ok = 0
    picks = runs[::50]
    for i, (cfg, m, _, _) in enumerate(picks):
        path = tmp_path / f"t{i}.ndjson"
        d = cfg.to_dict()
        d["emit_transcript"] = str(path)
        m2 = run_pipeline(RunConfig.from_dict(d))
        files_ok += _sum_transcript(str(path)) == m2.bits_total == m.bits_total
    ok = exceeded == 0 and mismatch == 0 and files_ok == len(picks)
    report("bandwidth/ledger", ok, f"{exceeded} bandwidth-exceeded events, {mismatch} ledger/transcript "
                                   f"mismatches, {files_ok}/{len(picks)} transcript files re-summed exactly")


def test_embedding_facts():
    spider = spider_example().measure("network")
    C4 = Network(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    E = build_power(C4, 2)
    deg_ok = (E.H.pseudo_degree == 4).all() and E.H.multiplicity(0, 2) == 2
    colors, _ = color_embedding(E, seed=0)
    c4_ok = verify_coloring(E.H, colors, require_total=True).ok and max(colors) <= 5 \
        and power_distance_ok(C4, 2, colors)
    good = total = 0
    rng = np.random.default_rng(2024)
    for t in (1, 2, 3):
        for i in range(50):
            n = int(rng.integers(8, 60))
            G = Network(n, gnp_links(n, float(rng.uniform(1.5, 4) / n), rng))
            E = build_power(G, t)
            colors, _ = color_embedding(E, seed=1000 * t + i)
            total += 1
            good += bool(verify_coloring(E.H, colors, require_total=True)) and power_distance_ok(G, t, colors)
    ok = spider == (1, 3) and deg_ok and c4_ok and good == total
    report("embedding facts", ok, f"spider (rho, d) = {spider}, C4^2 pseudo-degree 4 / opposite mult 2 "
                                  f"{bool(deg_ok)}, C4^2 coloring in [5] {c4_ok}, power colorings {good}/{total}")


def test_lower_bound_facts():
    count = len(lb.enumerate_matchings())
    freq = lb.pair_frequency()
    suite = lb.strategy_suite(0)
    errs = [lb.eval_strategy(s) for s in suite]
    trees = {}
    regular = True
    rng = np.random.default_rng(0)
    for k in (1, 4, 16):
        inst = lb.build_lb_graphs(k, rng.integers(105, size=k), rng.integers(105, size=k))
        trees[k] = inst.central_tree_count()
        regular &= lb.is_two_regular(inst.emb.H)
    ok = (count == 105 and len(freq) == 28 and all(Fraction(v, count) == Fraction(1, 7) for v in freq.values())
          and len(suite) == 120 and min(errs) >= Fraction(1, 196) and regular
          and all(trees[k] == 8 * k for k in trees))
    report("lower-bound facts", ok, f"{count} matchings, pair frequency {set(freq.values())}/105 over "
                                    f"{len(freq)} pairs, suite min error {min(errs)} >= 1/196, 2-regular "
                                    f"{regular}, central trees {trees}")


def _partial_coloring(g, H, keep_free=()):
    """Greedy random proper partial coloring; vertices in ``keep_free`` stay uncolored."""
    colors = np.zeros(H.n, np.int64)
    for u in g.permutation(H.n):
        if g.random() < 0.5 and u not in keep_free:
            s, e = H.indptr[u], H.indptr[u + 1]
            used = set(colors[H.nbr[s:e]].tolist())
            free = [c for c in range(1, H.pseudo_degree[u] + 2) if c not in used]
            colors[u] = free[int(g.integers(len(free)))]
    return colors


def _instances_up_to(deg_cap, count, seed):
    g = np.random.default_rng(seed)
    while count > 0:
        H = random_multigraph(g, 10, 0.6)
        colors = _partial_coloring(g, H)
        for v in np.flatnonzero((colors == UNCOLORED) & (H.pseudo_degree <= deg_cap)):
            yield H, colors, int(v)
            count -= 1


def test_sampler_laws():
    g = np.random.default_rng(606)
    pvals = []
    for i in range(20):
        H = random_multigraph(g, 12, 0.5)
        colors = _partial_coloring(g, H, keep_free=(0,))
        img = lowdeg.free_color_image(H, colors, 0)
        draws = lowdeg.sample_free_color(H, colors, 0, np.random.default_rng(i), size=10 ** 5)
        obs = np.array([(draws == c).sum() for c in img])
        assert obs.sum() == 10 ** 5
        pvals.append(stats.chisquare(obs).pvalue)
    checked = bad = 0
    for H, colors, v in _instances_up_to(12, 3000, 17):
        s, e = H.indptr[v], H.indptr[v + 1]
        used = set(colors[H.nbr[s:e]].tolist())
        img = lowdeg.free_color_image(H, colors, v)
        dpsi = int((H.nbr_mult[s:e] * (colors[H.nbr[s:e]] == UNCOLORED)).sum())
        bad += not (len(set(img)) == len(img) == dpsi + 1 and not set(img) & used
                    and all(1 <= c <= H.pseudo_degree[v] + 1 for c in img))
        checked += 1
    # the clique-palette sampler: 10^6 draws, never a reserved color
    emb = multi_embedding(lambda a, b: True, 64, 10)
    ctx = make_context(emb, Params(), 0)
    ctx.colors[[0, 1, 2]] = [100, 200, 65]
    reserved = 64
    s = trials.CliqueSampler(ctx, np.zeros(emb.n, np.int64), [np.arange(emb.n)], reserved, np.array([630]))
    V = np.arange(3, 64)
    drawn = 0
    hits = 0
    it = 0
    while drawn < 10 ** 6:
        out = s.sample(V, it, charge=False)
        hits += int(((out > 0) & (out <= reserved)).sum() + np.isin(out, [100, 200, 65]).sum())
        drawn += out.size
        it += 1
    ok = min(pvals) >= 0.01 and bad == 0 and hits == 0 and ctx.monitors.hard_violations() == {}
    report("sampler laws", ok, f"chi-square min p = {min(pvals):.3f} over 20 instances x 10^5 draws; "
                               f"{checked} exhaustive deg<=12 instances, {bad} bad; "
                               f"{drawn} clique-palette draws, {hits} reserved/used")


def test_loop_invariants(corpus):
    runs, _ = corpus
    checks = _monitor_totals(runs, "checks")
    viol = _monitor_totals(runs, "violations")
    names = ("palette-search:invariant", "grow-palette:range-target")
    ok = all(checks.get(k, 0) > 0 and viol.get(k, 0) == 0 for k in names)
    report("loop invariants", ok, ", ".join(f"{k} {viol.get(k, 0)} violations / {checks.get(k, 0)} checks"
                                            for k in names))


STRUCTURAL = ("acd:count-degree", "count-degree:high-end", "count-degree:noncabal", "acd:item4a", "acd:item4b",
              "put-aside:size", "put-aside:no-inter-edges", "sct:palette")


def test_structural_assertions(corpus):
    runs, _ = corpus
    checks = _monitor_totals(runs, "checks")
    viol = _monitor_totals(runs, "violations")
    reserved = [k for k in checks if k.startswith("reserved:")]
    names = list(STRUCTURAL) + sorted(reserved)
    missing = [k for k in names if checks.get(k, 0) == 0]
    broken = {k: viol[k] for k in names if viol.get(k, 0)}
    ok = not missing and not broken and len(reserved) >= 5
    report("structural assertions", ok, f"{len(names)} checkpoints ({len(reserved)} reserved-color phases), "
                                        f"{sum(checks[k] for k in names if k in checks)} checks, "
                                        f"violations {broken or 0}, never exercised {missing or 0}")


def _dense_slack_runs(runs, want=200):
    fr = [m.monitors["extremes"]["slack-fraction:value"][1] for _, m, _, _ in runs
          if "slack-fraction:value" in m.monitors["extremes"]]
    seed = 10 ** 6
    while len(fr) < want:
        cfg = RunConfig(kind="clique-blobs", seed=seed, forced_phase=True,
                        instance={"blobs": 2, "size": 128, "ext": 16.0, "p_in": 0.99})
        m = run_pipeline(cfg)
        if "slack-fraction:value" in m.monitors["extremes"]:
            fr.append(m.monitors["extremes"]["slack-fraction:value"][1])
        seed += 1
    return fr[:want]


def test_concentration(corpus):
    runs, _ = corpus
    t, xi, trials_n = 8000, 0.25, 10 ** 4
    fails = 0
    g = np.random.default_rng(81)
    for d in (1, 1000, 10 ** 6):
        for _ in range(trials_n // 1000):
            est = sketches.estimate_rows(sketches.sample_max_law(g, d, 1000, t))
            fails += int((np.abs(est - d) > xi * d).sum())
    rate = fails / (3 * trials_n)
    fr = _dense_slack_runs(runs)
    frac = sum(v <= 0.1 for v in fr)
    c = calibration.get("component_c")
    ratios = [max(m.samples["shatter:component-ratio"]) for _, m, _, _ in runs
              if m.samples.get("shatter:component-ratio")]
    shat = sum(r <= c for r in ratios) / max(len(ratios), 1)
    ok = rate <= 0.001 and frac == len(fr) == 200 and shat >= 0.99 and len(ratios) > 0
    report("concentration", ok, f"fingerprint envelope failures {rate:.4%} (<= 0.1%); slack fraction <= 1/10 on {frac}/{len(fr)} "
                                f"dense runs (max fraction {max(fr):.3f}); shatter bound c={c} on {shat:.2%} of "
                                f"{len(ratios)} seeds")


def test_calibrated_monitors(corpus):
    runs, _ = corpus
    gamma, sct_c = calibration.get("gamma_acct"), calibration.get("sct_c")
    acct = [v for _, m, _, _ in runs for v in m.samples.get("accounting-ratio", [])]
    sct_runs = [max(m.samples["sct:leftover-excess"]) for _, m, _, _ in runs if m.samples.get("sct:leftover-excess")]
    sct_ok = sum(v <= sct_c for v in sct_runs) / max(len(sct_runs), 1)
    ok = bool(acct) and min(acct) >= gamma and bool(sct_runs) and sct_ok >= 0.99
    report("calibrated monitors", ok, f"accounting ratio min {min(acct):.3f} >= gamma {gamma} over {len(acct)} "
                                      f"checkpoints; SCT leftover within bound (c={sct_c}) on {sct_ok:.2%} of "
                                      f"{len(sct_runs)} seeds")
