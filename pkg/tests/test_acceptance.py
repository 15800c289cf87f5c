"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances are pinned here and match the stated criteria; runtime budgets are
measured after a warmup call so one-time kernel compilation is not billed to
the metric under test.
"""

import json
import math
import time

import numpy as np
import pytest
from click.testing import CliRunner

from biasaudit import (
    ProtectedAttribute,
    SynthSpec,
    dba,
    gen_predictions,
    gen_spaces,
    generate_bundle,
    inter_model_similarity,
    kl_of_recall,
    kl_disparity,
    kmeans,
    lic,
    match_groups,
    max_skew_at_k,
    similarity_profile,
    spearman,
)
from biasaudit.cli import main as cli_main
from biasaudit.convergence import ConvergenceStats, convergence_report
from biasaudit.downstream import DbaInputs, ScoreTable
from biasaudit.retrieval import RecallVector
from conftest import make_embeddings, make_partition
from oracles import (
    dba_oracle,
    exhaustive_max_intersection,
    kl_uniform_oracle,
    max_skew_oracle,
    profile_oracle,
    spearman_rho_oracle,
    t_p_oracle_exact,
)


def _verdict(name: str, ok: bool, detail: str = ""):
    line = f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


GENDER = ProtectedAttribute("gender", ("female", "male"))


# ---------------------------------------------------------------------------
# criterion: KL metrics
# ---------------------------------------------------------------------------


def test_acceptance_kl_metrics():
    rng = np.random.default_rng(1234)
    cases = []
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        values = rng.uniform(0.001, 1.0, size=n).tolist()
        cases.append(values)

    start = time.perf_counter()
    worst = 0.0
    for values in cases:
        attr = ProtectedAttribute("a", tuple(f"d{i}" for i in range(len(values))))
        rv = RecallVector(
            attribute=attr, k=5,
            recalls=dict(zip(attr.demographics, values)),
            counts={d: 1 for d in attr.demographics},
        )
        table = ScoreTable(
            metric="m", attribute=attr,
            means=dict(zip(attr.demographics, values)),
            counts={d: 1 for d in attr.demographics},
        )
        want = kl_uniform_oracle(values)
        worst = max(worst, abs(kl_of_recall(rv) - want))
        worst = max(worst, abs(kl_disparity(table) - want))
    elapsed = time.perf_counter() - start

    # zero iff uniform
    uniform = RecallVector(
        attribute=GENDER, k=5, recalls={"female": 0.4, "male": 0.4},
        counts={"female": 1, "male": 1},
    )
    zero_ok = kl_of_recall(uniform) == 0.0
    skewed = RecallVector(
        attribute=GENDER, k=5, recalls={"female": 0.8, "male": 0.2},
        counts={"female": 1, "male": 1},
    )
    nonzero_ok = kl_of_recall(skewed) > 0.0

    # exact scale and permutation invariance
    invariance_ok = True
    for values in cases[:200]:
        attr = ProtectedAttribute("a", tuple(f"d{i}" for i in range(len(values))))

        def kl_for(vals):
            return kl_of_recall(
                RecallVector(
                    attribute=attr, k=5,
                    recalls=dict(zip(attr.demographics, vals)),
                    counts={d: 1 for d in attr.demographics},
                )
            )

        base = kl_for(values)
        if kl_for([v * 4.0 for v in values]) != base:  # exact binary scaling
            invariance_ok = False
        if kl_for(list(reversed(values))) != base:
            invariance_ok = False

    _verdict(
        "kl-metrics",
        worst <= 1e-12 and zero_ok and nonzero_ok and invariance_ok
        and elapsed < 1.0,
        f"max |err|={worst:.2e}, runtime={elapsed:.3f}s",
    )


# ---------------------------------------------------------------------------
# criterion: MaxSkew
# ---------------------------------------------------------------------------


def _random_skew_case(rng):
    n = int(rng.integers(10, 501))
    dim = 8
    n_demos = int(rng.integers(2, 5))
    attr = ProtectedAttribute("a", tuple(f"d{i}" for i in range(n_demos)))
    ids = [f"i{i:04d}" for i in range(n)]
    images = make_embeddings(ids, rng.normal(size=(n, dim)), "faces")
    buckets = {d: set() for d in attr.demographics}
    for i, sid in enumerate(ids):
        demo = attr.demographics[i % n_demos]  # every demographic non-empty
        buckets[demo].add(sid)
    part = make_partition(attr, buckets)
    prompt = rng.normal(size=dim)
    k = int(rng.integers(1, n + 1))
    return images, prompt, part, k, n


def test_acceptance_max_skew():
    rng = np.random.default_rng(99)
    # warmup compiles the retrieval kernels before timing starts
    images, prompt, part, k, n = _random_skew_case(rng)
    max_skew_at_k(images, prompt, part, k)

    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst = 0.0
    boundary_ok = True
    for _ in range(200):
        images, prompt, part, k, n = _random_skew_case(rng)
        got = max_skew_at_k(images, prompt, part, k).max_skew
        want = max_skew_oracle(images, prompt, part, k)
        worst = max(worst, abs(got - want))
        full = max_skew_at_k(images, prompt, part, n).max_skew
        if full != 0.0:  # k = D retrieves the whole corpus
            boundary_ok = False
    elapsed = time.perf_counter() - start
    _verdict(
        "max-skew",
        worst <= 1e-12 and boundary_ok and elapsed < 10.0,
        f"max |err|={worst:.2e}, runtime={elapsed:.2f}s",
    )


# ---------------------------------------------------------------------------
# criterion: DBA
# ---------------------------------------------------------------------------


def _random_dba(rng):
    n_demos = int(rng.integers(2, 5))
    attr = ProtectedAttribute("a", tuple(f"d{i}" for i in range(n_demos)))
    n_answers = int(rng.integers(2, 11))
    answers = [f"ans{i}" for i in range(n_answers)]
    n = int(rng.integers(n_demos, 201))
    gt, pred = [], []
    for i in range(n):
        demo = attr.demographics[i % n_demos]
        gt.append((f"q{i}", answers[int(rng.integers(n_answers))], demo))
        pred.append((f"q{i}", answers[int(rng.integers(n_answers))], demo))
    vocab = tuple(sorted({t for _, t, _ in gt}))
    return DbaInputs(attribute=attr, gt=tuple(gt), pred=tuple(pred),
                     vocabulary=vocab)


def test_acceptance_dba():
    rng = np.random.default_rng(17)
    start = time.perf_counter()
    worst = 0.0
    identity_ok = True
    for _ in range(500):
        inputs = _random_dba(rng)
        worst = max(worst, abs(dba(inputs) - dba_oracle(inputs)))
        same = DbaInputs(
            attribute=inputs.attribute, gt=inputs.gt, pred=inputs.gt,
            vocabulary=inputs.vocabulary,
        )
        if dba(same) != 0.0:
            identity_ok = False
    elapsed = time.perf_counter() - start

    # planted worked example
    gt = (
        [(f"m{i}", "red", "male") for i in range(3)]
        + [("m3", "blue", "male")]
        + [("f0", "red", "female")]
        + [(f"f{i}", "blue", "female") for i in range(1, 4)]
    )
    pred = [(q, "red" if d == "male" else "blue", d) for q, _, d in gt]
    worked = dba(
        DbaInputs(
            attribute=ProtectedAttribute("gender", ("male", "female")),
            gt=tuple(gt), pred=tuple(pred), vocabulary=("blue", "red"),
        )
    )
    _verdict(
        "dba",
        worst <= 1e-12 and identity_ok
        and abs(worked - 0.25) <= 1e-12 and elapsed < 10.0,
        f"max |err|={worst:.2e}, worked={worked}, runtime={elapsed:.2f}s",
    )


# ---------------------------------------------------------------------------
# criterion: LIC
# ---------------------------------------------------------------------------


def test_acceptance_lic():
    start = time.perf_counter()
    matches = 0
    for seed in range(20):
        side = "pred" if seed % 2 == 0 else "gt"
        spec = SynthSpec(
            seed=seed, samples=120, models=1, leak_rate=0.5, leak_side=side
        )
        bundle = gen_predictions(spec)
        demo_of = {
            sid: row[spec.attribute] for sid, row in bundle.annotations.rows.items()
        }
        gt_rows = [
            (r["id"], r["caption"], demo_of[r["id"]])
            for r in bundle.captions.gt_rows
        ]
        pred_rows = [
            (r["id"], r["caption"], demo_of[r["id"]])
            for r in bundle.captions.pred_rows
        ]
        result = lic(gt_rows, pred_rows, bundle.attribute, seed=seed)
        planted = bundle.captions.expected_sign
        if planted > 0 and result.lic > 0:
            matches += 1
        elif planted < 0 and result.lic < 0:
            matches += 1

    # exact zero on identical inputs with identical seed
    spec = SynthSpec(seed=77, samples=80, models=1)
    bundle = gen_predictions(spec)
    demo_of = {
        sid: row[spec.attribute] for sid, row in bundle.annotations.rows.items()
    }
    rows = [
        (r["id"], r["caption"], demo_of[r["id"]])
        for r in bundle.captions.gt_rows
    ]
    zero = lic(rows, rows, bundle.attribute, seed=3).lic
    elapsed = time.perf_counter() - start
    _verdict(
        "lic",
        matches >= 19 and zero == 0.0 and elapsed < 60.0,
        f"sign matches {matches}/20, identical-input lic={zero}, "
        f"runtime={elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# criterion: Spearman
# ---------------------------------------------------------------------------


def test_acceptance_spearman():
    rng = np.random.default_rng(5150)
    worst_rho = 0.0
    worst_p = 0.0
    produced = 0
    while produced < 1000:
        n = int(rng.integers(3, 51))
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        if rng.random() < 0.5:
            x = np.round(x, 1)
            y = np.round(y, 1)
        if len(set(x.tolist())) < 2 or len(set(y.tolist())) < 2:
            continue
        produced += 1
        result = spearman(x, y, method="t")
        want_rho = spearman_rho_oracle(x, y)
        worst_rho = max(worst_rho, abs(result.rho - want_rho))
        worst_p = max(worst_p, abs(result.p - t_p_oracle_exact(x, y)))

    # exact-permutation p agrees with seeded Monte-Carlo within 3 SE
    perm_ok = True
    rng = np.random.default_rng(77)
    for seed in range(8):
        n = int(rng.integers(4, 9))
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        exact = spearman(x, y, method="exact")
        draws = 50_000
        mc = spearman(x, y, method="montecarlo", seed=seed, draws=draws)
        se = math.sqrt(max(exact.p * (1 - exact.p), 1e-12) / draws)
        if abs(mc.p - exact.p) > 3 * se + 1e-12:
            perm_ok = False
    _verdict(
        "spearman",
        worst_rho <= 1e-12 and worst_p <= 1e-12 and perm_ok,
        f"max |rho err|={worst_rho:.2e}, max |p err|={worst_p:.2e}",
    )


# ---------------------------------------------------------------------------
# criterion: group matching
# ---------------------------------------------------------------------------


def test_acceptance_group_matching():
    sizes = [3, 5, 10]
    jaccard_wins = 0
    for seed in range(20):
        n_models = sizes[seed % 3]
        spec = SynthSpec(
            seed=9000 + seed, samples=650, dim=32, models=n_models, concepts=5,
            separation=6.0, noise=0.25,
        )
        pre_sets, _ = gen_spaces(spec)
        planted = [
            {pre_sets[0].ids[i] for i in range(spec.samples)
             if i % spec.concepts == c}
            for c in range(spec.concepts)
        ]
        clusterings = [kmeans(s, 6, seed=seed) for s in pre_sets]
        assignment = match_groups(clusterings, min_size=100)
        if len(assignment.groups) < 4:
            continue
        ok = all(
            max(
                len(set(g.members) & p) / len(set(g.members) | p)
                for p in planted
            ) >= 0.9
            for g in assignment.groups
        )
        if ok:
            jaccard_wins += 1

    # greedy equals the exhaustive combination search on small instances
    oracle_wins = 0
    instances = 40
    rng = np.random.default_rng(31)
    for i in range(instances):
        n_models = int(rng.integers(2, 4))
        k = int(rng.integers(2, 5))
        spec = SynthSpec(
            seed=5000 + i, samples=25 * k, dim=16, models=n_models, concepts=k,
            separation=5.0, noise=1.0,
        )
        pre_sets, _ = gen_spaces(spec)
        clusterings = [kmeans(s, k, seed=i) for s in pre_sets]
        assignment = match_groups(clusterings, min_size=1)
        greedy_best = max((len(g.members) for g in assignment.groups), default=0)
        if greedy_best == exhaustive_max_intersection(clusterings):
            oracle_wins += 1
    _verdict(
        "group-matching",
        jaccard_wins >= 18 and oracle_wins >= int(0.95 * instances),
        f"jaccard {jaccard_wins}/20, greedy==exhaustive {oracle_wins}/{instances}",
    )


# ---------------------------------------------------------------------------
# criterion: convergence
# ---------------------------------------------------------------------------


def test_acceptance_convergence():
    # profile oracle agreement
    rng = np.random.default_rng(2)
    ids = [f"s{i:02d}" for i in range(20)]
    matrix = rng.normal(size=(20, 7))
    emb = make_embeddings(ids, matrix, "m")
    profile = similarity_profile(emb, ids)
    oracle = profile_oracle(emb.matrix)
    profile_ok = float(np.max(np.abs(profile.values - np.asarray(oracle)))) <= 1e-6

    start = time.perf_counter()
    shift_wins = 0
    for seed in range(20):
        spec = SynthSpec(
            seed=seed, samples=200, dim=32, models=10, convergence_strength=0.9
        )
        pre_sets, post_sets = gen_spaces(spec)
        order = list(pre_sets[0].ids)
        pre = inter_model_similarity(
            [similarity_profile(s, order, "pre") for s in pre_sets]
        )
        post = inter_model_similarity(
            [similarity_profile(s, order, "post") for s in post_sets]
        )
        if post.mean > pre.mean and post.std < pre.std:
            shift_wins += 1
    elapsed = time.perf_counter() - start

    # the published-statistics computation: z = (0.9891 - 0.940) / 0.017
    def stats_from(stage, values):
        values = np.asarray(values)
        matrix = np.eye(3)
        matrix[0, 1] = matrix[1, 0] = values[0]
        matrix[0, 2] = matrix[2, 0] = values[1]
        matrix[1, 2] = matrix[2, 1] = values[2]
        return ConvergenceStats(
            stage=stage, model_ids=("a", "b", "c"), matrix=matrix,
            mean=float(values.mean()), std=float(values.std()),
            min=float(values.min()), max=float(values.max()),
            histogram_edges=np.linspace(values.min(), 1.0, 51),
            histogram_counts=np.zeros(50, dtype=int),
        )

    spread = 0.017 * math.sqrt(1.5)
    pre_stats = stats_from("pre", [0.940 - spread, 0.940, 0.940 + spread])
    post_stats = stats_from("post", [0.9891, 0.9940, 0.9980])
    z = convergence_report(pre_stats, post_stats)["z_min_post"]
    z_ok = abs(z - 2.89) <= 0.01
    _verdict(
        "convergence",
        profile_ok and shift_wins >= 19 and z_ok and elapsed < 30.0,
        f"shift {shift_wins}/20, z={z:.4f}, runtime={elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# criterion: CLI determinism
# ---------------------------------------------------------------------------


def _strip_timing(output: str) -> str:
    report = json.loads(output.splitlines()[0])
    report.pop("timing", None)
    return json.dumps(report, sort_keys=True)


def test_acceptance_cli_determinism(tmp_path):
    runner = CliRunner()
    bundle_dir = tmp_path / "bundle"
    spec = SynthSpec(seed=0, samples=120, dim=16, models=3)
    generate_bundle(spec, bundle_dir)
    b = bundle_dir
    expected = json.loads((b / "expected.json").read_text())

    groups_path = tmp_path / "groups.json"
    discover = [
        "groups", "discover", "--k", "5", "--min-size", "10",
        "--out", str(groups_path), "--seed", "0",
    ]
    for m in range(3):
        discover += ["--embeddings", str(b / f"pre_m{m:02d}.emb")]

    audit_groups = [
        "groups", "audit", "--groups", str(groups_path),
        "--metric", "recall-kl", "--pairs", str(b / "pairs.json"),
        "--annotations", str(b / "annotations.jsonl"),
        "--schema", str(b / "attributes.json"),
        "--attr", spec.attribute, "--k", "5", "--seed", "0",
    ]
    for m in range(3):
        audit_groups += ["--images", str(b / f"pre_m{m:02d}.emb")]
        audit_groups += ["--texts", str(b / f"texts_m{m:02d}.emb")]

    pre_table = {
        m: {"recall_kl": {spec.attribute: expected["pre"]["recall_kl"]["per_model"][m]}}
        for m in expected["models"]
    }
    down_table = {
        m: {"vqa_kl": {spec.attribute: expected["down"]["vqa_kl"]["per_model"][m]}}
        for m in expected["models"]
    }
    (tmp_path / "pre.json").write_text(json.dumps(pre_table))
    (tmp_path / "down.json").write_text(json.dumps(down_table))
    (tmp_path / "pre_gap.json").write_text(
        json.dumps(
            {m: expected["pre"]["recall_kl"]["per_model_recall"][m]
             for m in expected["models"]}
        )
    )
    (tmp_path / "down_gap.json").write_text(
        json.dumps(
            {m: expected["down"]["vqa_kl"]["per_model_accuracy"][m]
             for m in expected["models"]}
        )
    )

    converge_args = ["converge", "compare", "--ids", str(b / "ids.json"),
                     "--seed", "0"]
    for m in range(3):
        converge_args += ["--pre", str(b / f"pre_m{m:02d}.emb")]
        converge_args += ["--post", str(b / f"post_m{m:02d}.emb")]

    commands = {
        "audit recall": [
            "audit", "recall", "--images", str(b / "pre_m00.emb"),
            "--texts", str(b / "texts_m00.emb"), "--pairs", str(b / "pairs.json"),
            "--annotations", str(b / "annotations.jsonl"),
            "--schema", str(b / "attributes.json"), "--attr", spec.attribute,
            "--k", "5", "--seed", "0",
        ],
        "audit maxskew": [
            "audit", "maxskew", "--images", str(b / "faces_m00.emb"),
            "--prompts", str(b / "prompt_m00.emb"),
            "--annotations", str(b / "faces_annotations.jsonl"),
            "--schema", str(b / "attributes.json"), "--attr", spec.attribute,
            "--k", str(expected["pre"]["max_skew"]["k"]), "--seed", "0",
        ],
        "audit downstream kl": [
            "audit", "downstream", "--task", "vqa", "--metric", "kl",
            "--pred", str(b / "vqa_pred_m00.jsonl"),
            "--gt", str(b / "vqa_gt.jsonl"),
            "--annotations", str(b / "annotations.jsonl"),
            "--schema", str(b / "attributes.json"), "--attr", spec.attribute,
            "--seed", "0",
        ],
        "audit downstream dba": [
            "audit", "downstream", "--task", "vqa", "--metric", "dba",
            "--pred", str(b / "dba_pred_m00.jsonl"),
            "--gt", str(b / "dba_gt.jsonl"),
            "--annotations", str(b / "annotations.jsonl"),
            "--schema", str(b / "attributes.json"), "--attr", spec.attribute,
            "--seed", "0",
        ],
        "audit downstream lic": [
            "audit", "downstream", "--task", "caption", "--metric", "lic",
            "--pred", str(b / "captions_pred.jsonl"),
            "--gt", str(b / "captions_gt.jsonl"),
            "--annotations", str(b / "annotations.jsonl"),
            "--schema", str(b / "attributes.json"), "--attr", spec.attribute,
            "--seed", "0",
        ],
        "groups discover": discover,
        "groups audit": audit_groups,
        "transfer correlate": [
            "transfer", "correlate", "--pre", str(tmp_path / "pre.json"),
            "--down", str(tmp_path / "down.json"), "--seed", "0",
        ],
        "transfer gaps": [
            "transfer", "gaps", "--pre", str(tmp_path / "pre_gap.json"),
            "--down", str(tmp_path / "down_gap.json"),
            "--attr", spec.attribute, "--schema", str(b / "attributes.json"),
            "--seed", "0",
        ],
        "converge compare": converge_args,
        "validate": ["validate", "--embeddings", str(b / "pre_m00.emb")],
    }

    all_ok = True
    for name, args in commands.items():
        first = runner.invoke(cli_main, args)
        second = runner.invoke(cli_main, args)
        if first.exit_code != 0 or second.exit_code != 0:
            all_ok = False
            print(f"  command failed: {name}: {first.output[:300]}")
            continue
        if _strip_timing(first.output) != _strip_timing(second.output):
            all_ok = False
            print(f"  non-deterministic report: {name}")

    # synth generate twice: identical trees
    out_a, out_b = tmp_path / "synth_a", tmp_path / "synth_b"
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(SynthSpec(seed=0, samples=80, models=2).to_dict()))
    for out in (out_a, out_b):
        result = runner.invoke(
            cli_main,
            ["synth", "generate", "--spec", str(spec_path), "--out", str(out),
             "--seed", "0"],
        )
        if result.exit_code != 0:
            all_ok = False
    tree_a = {p.name: p.read_bytes() for p in sorted(out_a.iterdir())}
    tree_b = {p.name: p.read_bytes() for p in sorted(out_b.iterdir())}
    if tree_a != tree_b:
        all_ok = False
        print("  synth generate trees differ")

    _verdict("cli-determinism", all_ok, f"{len(commands) + 1} commands checked")


# ---------------------------------------------------------------------------
# criterion: end-to-end sweep
# ---------------------------------------------------------------------------


def _audit_value(runner, args, key):
    result = runner.invoke(cli_main, args)
    assert result.exit_code == 0, result.output
    report = json.loads(result.output.splitlines()[0])
    return report["results"][key]["value"]


def test_acceptance_end_to_end(tmp_path):
    runner = CliRunner()
    wins = 0
    for seed in range(20):
        outdir = tmp_path / f"bundle{seed:02d}"
        spec = SynthSpec(seed=seed, samples=160, dim=16, models=10)
        generate_bundle(spec, outdir)
        b = outdir
        expected = json.loads((b / "expected.json").read_text())
        models = expected["models"]
        skew_k = str(expected["pre"]["max_skew"]["k"])

        pre_table, down_table = {}, {}
        for m in models:
            recall_kl = _audit_value(
                runner,
                [
                    "audit", "recall", "--images", str(b / f"pre_{m}.emb"),
                    "--texts", str(b / f"texts_{m}.emb"),
                    "--pairs", str(b / "pairs.json"),
                    "--annotations", str(b / "annotations.jsonl"),
                    "--schema", str(b / "attributes.json"),
                    "--attr", spec.attribute, "--k", "5", "--seed", "0",
                ],
                "kl",
            )
            skew = _audit_value(
                runner,
                [
                    "audit", "maxskew", "--images", str(b / f"faces_{m}.emb"),
                    "--prompts", str(b / f"prompt_{m}.emb"),
                    "--annotations", str(b / "faces_annotations.jsonl"),
                    "--schema", str(b / "attributes.json"),
                    "--attr", spec.attribute, "--k", skew_k, "--seed", "0",
                ],
                "mean_max_skew",
            )
            vqa_kl = _audit_value(
                runner,
                [
                    "audit", "downstream", "--task", "vqa", "--metric", "kl",
                    "--pred", str(b / f"vqa_pred_{m}.jsonl"),
                    "--gt", str(b / "vqa_gt.jsonl"),
                    "--annotations", str(b / "annotations.jsonl"),
                    "--schema", str(b / "attributes.json"),
                    "--attr", spec.attribute, "--seed", "0",
                ],
                "kl",
            )
            dba_value = _audit_value(
                runner,
                [
                    "audit", "downstream", "--task", "vqa", "--metric", "dba",
                    "--pred", str(b / f"dba_pred_{m}.jsonl"),
                    "--gt", str(b / "dba_gt.jsonl"),
                    "--annotations", str(b / "annotations.jsonl"),
                    "--schema", str(b / "attributes.json"),
                    "--attr", spec.attribute, "--seed", "0",
                ],
                "dba",
            )
            pre_table[m] = {
                "recall_kl": {spec.attribute: recall_kl},
                "max_skew": {spec.attribute: skew},
            }
            down_table[m] = {
                "vqa_kl": {spec.attribute: vqa_kl},
                "dba": {spec.attribute: dba_value},
            }

        pre_path = outdir / "pre.json"
        down_path = outdir / "down.json"
        pre_path.write_text(json.dumps(pre_table))
        down_path.write_text(json.dumps(down_table))
        result = runner.invoke(
            cli_main,
            ["transfer", "correlate", "--pre", str(pre_path),
             "--down", str(down_path), "--seed", "0"],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(result.output.splitlines()[0])
        entries = {
            (e["pre_metric"], e["down_metric"]): e["rho"]["value"]
            for e in report["results"]["results"]
        }
        planted = entries.pop(("recall_kl", "vqa_kl"))
        if planted == pytest.approx(1.0, abs=1e-12) and all(
            abs(rho) < 0.7 for rho in entries.values()
        ):
            wins += 1
    _verdict("end-to-end", wins >= 18, f"{wins}/20 seeds")
