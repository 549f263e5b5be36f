//! Acceptance suite. Each criterion prints one PASS/FAIL line with the
//! measured values; the test fails if any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use joint_struct::eval::{aggregate, evaluate_instance, gap, pcp, report, InstanceEval, Tally};
use joint_struct::experiment::{gridsearch, oracle_case, predict_and_evaluate, train_separated, InferenceMode};
use joint_struct::features::{assemble_joint, score_joint, FeatureMask};
use joint_struct::inference::{
    brute_force_joint, infer_attrs_given_pose, infer_batch, infer_joint, infer_pose_given_attrs, score_full, Objective,
    DEFAULT_BRUTE_FORCE_CAP, DEFAULT_MAX_ITER,
};
use joint_struct::instance::{dataset_to_string, Instance, JointLabel, OrientedBox};
use joint_struct::model::ModelSpec;
use joint_struct::par::Execution;
use joint_struct::ssvm::{train_with, TrainConfig};
use joint_struct::synth::{generate_with, SynthConfig};

const EXACT_TOL: f64 = 1e-9;
const ALPHA: f64 = 0.1;
const BETA: f64 = 1.0;
const PCP_THRESHOLD: f64 = 0.5;
/// Regularization used for the planted-model experiments; the synthetic
/// descriptors are unit scale, where the library default underfits.
const EXPERIMENT_C: f64 = 1.0;
const SEEDS: u64 = 5;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn verdict(id: u32, name: &str, ok: bool, detail: String) -> bool {
    println!("criterion {id} [{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn experiment_spec() -> ModelSpec {
    ModelSpec::default_model(16, 8, [8; 5])
}

fn experiment_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        c: EXPERIMENT_C,
        seed,
        ..TrainConfig::default()
    }
}

fn mixed_radix(mut code: usize, radices: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for (slot, &r) in out.iter_mut().zip(radices).rev() {
        *slot = code % r;
        code /= r;
    }
    out
}

fn random_attrs(rng: &mut ChaCha8Rng, spec: &ModelSpec) -> Vec<usize> {
    spec.attributes
        .cardinalities
        .iter()
        .map(|&t| rng.random_range(0..t))
        .collect()
}

fn random_pose(rng: &mut ChaCha8Rng, inst: &Instance) -> Vec<usize> {
    inst.ensembles.iter().map(|l| rng.random_range(0..l.len())).collect()
}

fn criterion_1() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut pose_ok, mut attr_ok) = (0, 0);
    let n = 100;
    for seed in 0..n {
        let (spec, inst, w) = oracle_case(seed);
        let obj = Objective::new(&spec, &w, ALPHA, BETA).unwrap();
        let sizes: Vec<usize> = inst.ensembles.iter().map(Vec::len).collect();
        let cards = spec.attributes.cardinalities.clone();

        let c = random_attrs(&mut rng, &spec);
        let best_pose = (0..sizes.iter().product())
            .map(|code| score_full(&obj, &inst, &JointLabel::new(mixed_radix(code, &sizes), c.clone())).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let dp = infer_pose_given_attrs(&obj, &inst, Some(&c)).unwrap();
        let got = score_full(&obj, &inst, &JointLabel::new(dp.pose, c.clone())).unwrap();
        pose_ok += usize::from(close(got, best_pose, EXACT_TOL));

        let p = random_pose(&mut rng, &inst);
        let best_attrs = (0..cards.iter().product())
            .map(|code| score_full(&obj, &inst, &JointLabel::new(p.clone(), mixed_radix(code, &cards))).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let dp = infer_attrs_given_pose(&obj, &inst, &p).unwrap();
        let got = score_full(&obj, &inst, &JointLabel::new(p, dp.attrs)).unwrap();
        attr_ok += usize::from(close(got, best_attrs, EXACT_TOL));
    }
    verdict(
        1,
        "conditional inference matches exhaustive search",
        pose_ok == n as usize && attr_ok == n as usize,
        format!("pose {pose_ok}/{n}, attributes {attr_ok}/{n}, tol {EXACT_TOL:e}"),
    )
}

fn criterion_2() -> bool {
    let n = 100;
    let mut ok = 0;
    let mut max_iterations = 0;
    for seed in 0..n {
        let (spec, inst, w) = oracle_case(seed);
        let obj = Objective::new(&spec, &w, ALPHA, BETA).unwrap();
        let r = infer_joint(&obj, &inst, DEFAULT_MAX_ITER).unwrap();
        max_iterations = max_iterations.max(r.iterations);
        let monotone = r.trace.windows(2).all(|p| p[1] >= p[0]);
        let direct = score_full(&obj, &inst, &r.label).unwrap();
        let (_, global) = brute_force_joint(&obj, &inst, DEFAULT_BRUTE_FORCE_CAP, Execution::Parallel).unwrap();
        let bounded = r.score <= global + EXACT_TOL * global.abs().max(1.0);
        if monotone && r.iterations <= 10 && close(direct, r.score, EXACT_TOL) && bounded {
            ok += 1;
        }
    }
    verdict(
        2,
        "joint inference contracts",
        ok == n,
        format!("{ok}/{n} (max iterations {max_iterations})"),
    )
}

fn criterion_3() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let n = 1000;
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let (spec, inst, _) = oracle_case(10_000 + i as u64);
        let w: Vec<f64> = (0..spec.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = JointLabel::new(random_pose(&mut rng, &inst), random_attrs(&mut rng, &spec));
        let blockwise = score_joint(&w, &inst, &spec, &y).unwrap();
        let dense: f64 = assemble_joint(&inst, &spec, &y, &FeatureMask::all())
            .unwrap()
            .iter()
            .zip(&w)
            .map(|(a, b)| a * b)
            .sum();
        worst = worst.max((blockwise - dense).abs() / blockwise.abs().max(dense.abs()).max(1.0));
        ok += usize::from(close(blockwise, dense, EXACT_TOL));
    }
    verdict(
        3,
        "blockwise score equals dense dot product",
        ok == n,
        format!("{ok}/{n}, worst relative gap {worst:.2e}"),
    )
}

fn criterion_4() -> bool {
    let t = Instant::now();
    let spec = experiment_spec();
    let cfg = SynthConfig {
        sigma: 0.1,
        edge_fidelity: 0.9,
        seed: 4,
        ..SynthConfig::default()
    };
    let data = generate_with(&cfg, &spec, Execution::Sequential);
    let (w, _) = train_with(
        &data.train,
        &spec,
        &experiment_train_config(4),
        ALPHA,
        BETA,
        Execution::Sequential,
    )
    .unwrap();
    let r = predict_and_evaluate(
        &spec,
        &w.0,
        ALPHA,
        BETA,
        &data.test,
        InferenceMode::Joint,
        DEFAULT_MAX_ITER,
        PCP_THRESHOLD,
        Execution::Sequential,
    )
    .unwrap();
    let gap_total = r.gap_total.unwrap_or(0.0);
    let secs = t.elapsed().as_secs_f64();
    verdict(
        4,
        "planted-model learnability (300/700, one worker)",
        r.pcp_total >= 0.90 && gap_total >= 0.85 && secs < 600.0,
        format!(
            "PCP {:.4} (>= 0.90), GAP {gap_total:.4} (>= 0.85), {secs:.1}s",
            r.pcp_total
        ),
    )
}

fn criterion_5() -> bool {
    let spec = experiment_spec();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..SEEDS {
        let cfg = SynthConfig {
            rho: 0.8,
            seed,
            ..SynthConfig::default()
        };
        let data = generate_with(&cfg, &spec, Execution::Parallel);
        let tc = experiment_train_config(seed);
        let (w, _) = train_with(&data.train, &spec, &tc, ALPHA, BETA, Execution::Parallel).unwrap();
        let joint = predict_and_evaluate(
            &spec,
            &w.0,
            ALPHA,
            BETA,
            &data.test,
            InferenceMode::Joint,
            DEFAULT_MAX_ITER,
            PCP_THRESHOLD,
            Execution::Parallel,
        )
        .unwrap();
        let ws = train_separated(&data.train, &spec, &tc, ALPHA, BETA, Execution::Parallel).unwrap();
        let sep = predict_and_evaluate(
            &spec,
            &ws.0,
            ALPHA,
            BETA,
            &data.test,
            InferenceMode::Separate,
            DEFAULT_MAX_ITER,
            PCP_THRESHOLD,
            Execution::Parallel,
        )
        .unwrap();
        let (jg, sg) = (joint.gap_total.unwrap_or(0.0), sep.gap_total.unwrap_or(0.0));
        let win = jg > sg && joint.pcp_total >= sep.pcp_total;
        wins += usize::from(win);
        rows.push(format!(
            "seed {seed}: PCP {:.4}/{:.4} GAP {jg:.4}/{sg:.4}",
            joint.pcp_total, sep.pcp_total
        ));
    }
    verdict(
        5,
        "joint beats cross-masked (joint/separated)",
        2 * wins > SEEDS as usize,
        format!("{wins}/{SEEDS} seeds; {}", rows.join("; ")),
    )
}

fn criterion_6() -> bool {
    let spec = experiment_spec();
    let alphas = [0.0, 0.1, 0.5];
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..SEEDS {
        let cfg = SynthConfig {
            edge_fidelity: 1.0,
            seed: 600 + seed,
            ..SynthConfig::default()
        };
        let data = generate_with(&cfg, &spec, Execution::Parallel);
        let tc = experiment_train_config(seed);
        let grid = gridsearch(
            &data.train,
            &spec,
            &tc,
            &alphas,
            &[BETA],
            3,
            DEFAULT_MAX_ITER,
            PCP_THRESHOLD,
            Execution::Parallel,
        )
        .unwrap();
        let run = |alpha: f64| {
            let (w, _) = train_with(&data.train, &spec, &tc, alpha, BETA, Execution::Parallel).unwrap();
            predict_and_evaluate(
                &spec,
                &w.0,
                alpha,
                BETA,
                &data.test,
                InferenceMode::Joint,
                DEFAULT_MAX_ITER,
                PCP_THRESHOLD,
                Execution::Parallel,
            )
            .unwrap()
            .pcp_total
        };
        let tuned = run(grid.best_alpha);
        let plain = run(0.0);
        wins += usize::from(tuned >= plain);
        rows.push(format!(
            "seed {seed}: α={} PCP {tuned:.4} vs {plain:.4}",
            grid.best_alpha
        ));
    }
    verdict(
        6,
        "edge term does not hurt PCP (tuned/α=0)",
        2 * wins > SEEDS as usize,
        format!("{wins}/{SEEDS} seeds; {}", rows.join("; ")),
    )
}

fn mean_pose_dp_seconds(k: usize, n: usize) -> f64 {
    let spec = experiment_spec();
    let cfg = SynthConfig {
        n_train: n,
        n_test: 0,
        candidates_per_part: k,
        seed: 7,
        ..SynthConfig::default()
    };
    let data = generate_with(&cfg, &spec, Execution::Parallel);
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let w: Vec<f64> = (0..spec.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let obj = Objective::new(&spec, &w, ALPHA, BETA).unwrap();
    let attrs: Vec<Vec<usize>> = data.train.iter().map(|_| random_attrs(&mut rng, &spec)).collect();
    // best of three passes to damp scheduler noise
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let t = Instant::now();
        for (inst, c) in data.train.iter().zip(&attrs) {
            std::hint::black_box(infer_pose_given_attrs(&obj, inst, Some(c)).unwrap());
        }
        best = best.min(t.elapsed().as_secs_f64());
    }
    best / n as f64
}

fn criterion_7() -> bool {
    let n = 200;
    let t10 = mean_pose_dp_seconds(10, n);
    let t20 = mean_pose_dp_seconds(20, n);
    let ratio = t20 / t10;
    verdict(
        7,
        "pose DP cost when K doubles",
        ratio <= 5.0,
        format!(
            "K=10 {:.1}µs, K=20 {:.1}µs, ratio {ratio:.2} (<= 5) over {n} instances",
            t10 * 1e6,
            t20 * 1e6
        ),
    )
}

fn boxed(x: f64, y: f64, theta: f64, s: f64) -> OrientedBox {
    OrientedBox { x, y, theta, s }
}

fn criterion_8() -> bool {
    let mut checks = Vec::new();
    let b = boxed(100.0, 100.0, 30.0, 40.0);
    checks.push(("identical box", pcp(&[b], &[b], 0.01).unwrap() == vec![true]));
    // one endpoint displaced by 0.6 L along the axis
    let moved = {
        let [p0, p1] = b.endpoints();
        let (dx, dy) = ((p1.0 - p0.0) / b.s, (p1.1 - p0.1) / b.s);
        let q1 = (p1.0 + 0.6 * b.s * dx, p1.1 + 0.6 * b.s * dy);
        boxed((p0.0 + q1.0) / 2.0, (p0.1 + q1.1) / 2.0, b.theta, 1.6 * b.s)
    };
    checks.push((
        "endpoint off by 0.6 L",
        pcp(&[moved], &[b], 0.5).unwrap() == vec![false],
    ));
    let flipped = boxed(b.x, b.y, b.theta + 180.0, b.s);
    checks.push(("flipped box", pcp(&[flipped], &[b], 0.5).unwrap() == vec![true]));
    let cards = [4, 8, 4, 5, 3];
    let groups = vec![
        vec![None, None, None, None, Some(1)],
        vec![None, None, None, None, Some(2)],
    ];
    checks.push((
        "either group",
        gap(&[0, 0, 0, 0, 2], &groups, &cards).unwrap()[4] == Some(true),
    ));
    checks.push((
        "unlabeled skipped",
        gap(&[0, 0, 0, 0, 2], &groups, &cards).unwrap()[2].is_none(),
    ));
    let exact = vec![vec![Some(1), Some(2), Some(3), Some(4), Some(0)]];
    checks.push((
        "exact match",
        gap(&[1, 2, 3, 4, 0], &exact, &cards).unwrap() == vec![Some(true); 5],
    ));
    let spec = ModelSpec::default_model(4, 4, [2; 5]);
    let one = InstanceEval {
        parts: vec![true, true, false, true, false, true],
        attributes: vec![Some(true); 5],
    };
    let r = aggregate(&[one], &spec, 0.5).unwrap();
    checks.push(("hand aggregation", (r.pcp_total - 4.0 / 6.0).abs() < 1e-15));

    // associativity over random partitions of random evaluations
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut assoc = true;
    for _ in 0..200 {
        let evals: Vec<InstanceEval> = (0..rng.random_range(1..40))
            .map(|_| InstanceEval {
                parts: (0..6).map(|_| rng.random_bool(0.7)).collect(),
                attributes: (0..5)
                    .map(|_| {
                        if rng.random_bool(0.2) {
                            None
                        } else {
                            Some(rng.random_bool(0.6))
                        }
                    })
                    .collect(),
            })
            .collect();
        let whole = Tally::from_evals(&evals);
        let mut cuts: Vec<usize> = (0..rng.random_range(0..4))
            .map(|_| rng.random_range(0..=evals.len()))
            .collect();
        cuts.push(0);
        cuts.push(evals.len());
        cuts.sort_unstable();
        let parts: Vec<Tally> = cuts.windows(2).map(|c| Tally::from_evals(&evals[c[0]..c[1]])).collect();
        let left = parts.iter().fold(Tally::default(), |acc, t| acc.merge(t));
        let right = parts
            .iter()
            .rev()
            .fold(Tally::default(), |acc, t| t.clone().merge(&acc));
        assoc &= left == whole && right == whole;
        assoc &= report(&left, &spec, 0.5).unwrap() == report(&whole, &spec, 0.5).unwrap();
    }
    checks.push(("associative aggregation", assoc));
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    verdict(
        8,
        "metric suite",
        failed.is_empty(),
        format!(
            "{}/{} checks{}",
            checks.len() - failed.len(),
            checks.len(),
            if failed.is_empty() {
                String::new()
            } else {
                format!(", failed: {failed:?}")
            }
        ),
    )
}

fn criterion_9() -> bool {
    let spec = experiment_spec();
    let cfg = SynthConfig {
        n_train: 40,
        n_test: 40,
        seed: 9,
        ..SynthConfig::default()
    };
    let run = || {
        let d = generate_with(&cfg, &spec, Execution::Sequential);
        let data = dataset_to_string(&d.train, &spec) + &dataset_to_string(&d.test, &spec);
        let (w, _) = train_with(
            &d.train,
            &spec,
            &experiment_train_config(9),
            ALPHA,
            BETA,
            Execution::Sequential,
        )
        .unwrap();
        let obj = Objective::new(&spec, &w.0, ALPHA, BETA).unwrap();
        let results: Vec<_> = infer_batch(&obj, &d.test, DEFAULT_MAX_ITER, Execution::Sequential)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        let evals: Vec<InstanceEval> = d
            .test
            .iter()
            .zip(&results)
            .map(|(inst, r)| evaluate_instance(inst, &spec, &r.label, PCP_THRESHOLD).unwrap())
            .collect();
        (data, w.to_bytes(&spec), serde_json::to_string(&results).unwrap(), evals)
    };
    let (a, b) = (run(), run());
    let same = [a.0 == b.0, a.1 == b.1, a.2 == b.2, a.3 == b.3];
    verdict(
        9,
        "bitwise determinism with one worker",
        same.iter().all(|&s| s),
        format!(
            "synth {}, train {}, infer {}, eval {}",
            same[0], same[1], same[2], same[3]
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [fn() -> bool; 9] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
    ];
    let mut failed = Vec::new();
    for (i, c) in criteria.iter().enumerate() {
        let t = Instant::now();
        if !c() {
            failed.push(i + 1);
        }
        println!("  ({:.1}s)", t.elapsed().as_secs_f64());
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
