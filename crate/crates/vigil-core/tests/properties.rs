//! Cross-module invariants, checked over randomized inputs.

use proptest::prelude::*;

use vigil_core::belief::{BeliefState, TruthProbability, ZMode};
use vigil_core::descriptor::{
    validate_descriptor, DirectCheck, FalsificationDecl, InputKind, MonitorDescriptor,
    ObservedOutput, OperatorNotify, OutputKind, ReferenceInput, SpecificationDecl, SurrogateDecl,
};
use vigil_core::detection::Detection;
use vigil_core::predictor::{calibrate_sigma, PredictorConfig, PredictorState};
use vigil_core::special::regularized_incomplete_beta;

fn z(v: f64) -> TruthProbability {
    TruthProbability::new(v).unwrap()
}

fn belief_from(zs: &[f64]) -> BeliefState {
    let mut b = BeliefState::new();
    for &v in zs {
        b.update(z(v));
    }
    b
}

/// Brute-force reference: enumerate all 2^n truth/false outcomes.
fn enumerated_distribution(zs: &[f64]) -> Vec<f64> {
    let n = zs.len();
    let mut dist = vec![0.0; n + 1];
    for mask in 0u32..(1 << n) {
        let mut weight = 1.0;
        let mut trues = 0usize;
        for (i, &zi) in zs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                weight *= zi;
                trues += 1;
            } else {
                weight *= 1.0 - zi;
            }
        }
        dist[trues] += weight;
    }
    dist
}

fn composite_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    assert!(intervals.is_multiple_of(2));
    let h = (b - a) / intervals as f64;
    let mut sum = f(a) + f(b);
    for i in 1..intervals {
        let x = a + h * i as f64;
        sum += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

proptest! {
    #[test]
    fn belief_recursion_matches_enumeration(
        zs in prop::collection::vec(0.0..=1.0f64, 1..=10)
    ) {
        let b = belief_from(&zs);
        let reference = enumerated_distribution(&zs);
        prop_assert_eq!(b.probs().len(), reference.len());
        for (got, want) in b.probs().iter().zip(&reference) {
            prop_assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
    }

    #[test]
    fn belief_stays_normalized(
        zs in prop::collection::vec(0.0..=1.0f64, 1..=300)
    ) {
        let b = belief_from(&zs);
        let sum: f64 = b.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9, "sum {sum}");
        prop_assert!(b.probs().iter().all(|&p| (-1e-15..=1.0 + 1e-12).contains(&p)));
    }

    #[test]
    fn confidence_is_monotone_in_threshold(
        zs in prop::collection::vec(0.0..=1.0f64, 1..=40),
        t1 in 0.001..0.999f64,
        t2 in 0.001..0.999f64,
    ) {
        let b = belief_from(&zs);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let c_lo = b.confidence(lo).unwrap();
        let c_hi = b.confidence(hi).unwrap();
        prop_assert!(c_lo <= c_hi + 1e-12, "conf({lo})={c_lo} > conf({hi})={c_hi}");
    }

    #[test]
    fn incomplete_beta_symmetry(
        a in 0.1..50.0f64,
        b in 0.1..50.0f64,
        x in 0.001..0.999f64,
    ) {
        let lhs = regularized_incomplete_beta(a, b, x).unwrap();
        let rhs = regularized_incomplete_beta(b, a, 1.0 - x).unwrap();
        prop_assert!((lhs + rhs - 1.0).abs() < 1e-12, "I_x(a,b)={lhs}, I_(1-x)(b,a)={rhs}");
    }

    #[test]
    fn prediction_is_translation_equivariant(
        points in prop::collection::vec(
            (-100.0..100.0f64, -100.0..100.0f64), 3..=24
        ),
        dx in -1000.0..1000.0f64,
        dy in -1000.0..1000.0f64,
    ) {
        let cfg = PredictorConfig { window: 8, gate: None };
        let mut base = PredictorState::new(cfg).unwrap();
        let mut shifted = PredictorState::new(cfg).unwrap();
        for (i, (x, y)) in points.iter().enumerate() {
            let d0 = Detection::new(i as u64 + 1, i as f64, [*x, *y]);
            let d1 = Detection::new(i as u64 + 1, i as f64, [*x + dx, *y + dy]);
            let r0 = base.observe(&d0).unwrap().residual;
            let r1 = shifted.observe(&d1).unwrap().residual;
            match (r0, r1) {
                (None, None) => {}
                (Some(a), Some(b)) => prop_assert!(
                    (a.residual_norm - b.residual_norm).abs() < 1e-7,
                    "step {i}: {} vs {}", a.residual_norm, b.residual_norm
                ),
                other => prop_assert!(false, "residual presence diverged: {other:?}"),
            }
        }
    }

    #[test]
    fn collinear_motion_has_zero_residuals(
        vx in -100.0..100.0f64,
        vy in -100.0..100.0f64,
        x0 in -1000.0..1000.0f64,
        y0 in -1000.0..1000.0f64,
        dt in 0.1..10.0f64,
        n in 3usize..30,
    ) {
        let mut p = PredictorState::new(PredictorConfig::default()).unwrap();
        for i in 0..n {
            let t = i as f64 * dt;
            let d = Detection::new(i as u64 + 1, t, [x0 + vx * t, y0 + vy * t]);
            if let Some(r) = p.observe(&d).unwrap().residual {
                prop_assert!(r.residual_norm < 1e-6, "step {i}: residual {}", r.residual_norm);
            }
        }
    }

    #[test]
    fn calibration_is_positively_homogeneous(
        mut residuals in prop::collection::vec(0.0..100.0f64, 2..=40),
        scale in 0.001..1000.0f64,
    ) {
        // Guarantee a non-degenerate sample.
        let bumped = residuals[0] + 1.0;
        residuals.push(bumped);
        let base = calibrate_sigma(&residuals).unwrap();
        let scaled_input: Vec<f64> = residuals.iter().map(|r| r * scale).collect();
        let scaled = calibrate_sigma(&scaled_input).unwrap();
        prop_assert!(
            (scaled - scale * base).abs() <= 1e-9 * scale * base.max(1.0),
            "calibrate({scale} * r) = {scaled}, {scale} * calibrate(r) = {}",
            scale * base
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_density_integrates_to_one(
        zs in prop::collection::vec(0.0..=1.0f64, 1..=60)
    ) {
        let b = belief_from(&zs);
        let integral = composite_simpson(|x| b.posterior_pdf(x), 0.0, 1.0, 4096);
        prop_assert!((integral - 1.0).abs() < 1e-6, "integral {integral}");
    }

    #[test]
    fn strategy_assignment_ignores_declaration_order(
        d in arb_valid_descriptor(),
        seed in any::<u64>(),
    ) {
        let a = validate_descriptor(&d).unwrap();
        let mut shuffled = d.clone();
        // Deterministic Fisher-Yates driven by the seed.
        let mut state = seed | 1;
        let len = shuffled.specifications.len();
        for i in (1..len).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            shuffled.specifications.swap(i, j);
        }
        let b = validate_descriptor(&shuffled).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn descriptor_serde_round_trip(d in arb_descriptor()) {
        let text = serde_json::to_string(&d).unwrap();
        let back: MonitorDescriptor = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, d);
    }
}

fn arb_input_kind() -> impl Strategy<Value = InputKind> {
    prop_oneof![
        Just(InputKind::Signal),
        Just(InputKind::Statistic),
        Just(InputKind::Qos),
        Just(InputKind::Sla),
        Just(InputKind::State),
        Just(InputKind::Functional),
    ]
}

fn arb_output_kind() -> impl Strategy<Value = OutputKind> {
    prop_oneof![
        Just(OutputKind::Physical),
        Just(OutputKind::Qos),
        Just(OutputKind::Computational),
        Just(OutputKind::External),
    ]
}

prop_compose! {
    fn arb_specification(input_count: usize, output_count: usize)(
        idx in 0..1000usize,
        observable in any::<bool>(),
        with_surrogate in any::<bool>(),
        with_falsification in any::<bool>(),
        with_direct in any::<bool>(),
        t_fp in 0.001..0.9f64,
        c1 in 0.5..0.999f64,
        picks in prop::collection::vec(any::<prop::sample::Index>(), 1..=3),
    ) -> SpecificationDecl {
        let surrogate = with_surrogate.then(|| SurrogateDecl {
            estimator_name: "fp_rate_markov".into(),
            inputs: picks
                .iter()
                .map(|p| format!("in{}", p.index(input_count)))
                .collect(),
            t_fp: Some(t_fp),
            c1: Some(c1),
            sigma: None,
            calibrate_first: None,
            z_mode: Some(ZMode::UnitPeak),
        });
        let direct = (with_direct && output_count > 0).then(|| DirectCheck {
            output: format!("out{}", picks[0].index(output_count)),
            max: 80.0,
        });
        // Guarantee every spec gets some strategy so validation succeeds.
        let falsification = (with_falsification || (!observable && !with_surrogate))
            .then(|| FalsificationDecl {
                condition_text: "observable symptom".into(),
            });
        SpecificationDecl {
            name: format!("spec{idx}"),
            formal_text: "Pr(f_FP <= T) >= c1".into(),
            directly_observable: observable,
            direct,
            surrogate,
            falsification,
        }
    }
}

prop_compose! {
    fn arb_valid_descriptor()(
        input_kinds in prop::collection::vec(arb_input_kind(), 1..=4),
        output_kinds in prop::collection::vec(arb_output_kind(), 1..=3),
    )(
        specs in {
            let (ni, no) = (input_kinds.len(), output_kinds.len());
            prop::collection::vec(arb_specification(ni, no), 1..=5)
        },
        input_kinds in Just(input_kinds),
        output_kinds in Just(output_kinds),
        notify in any::<bool>(),
    ) -> MonitorDescriptor {
        let mut specs = specs;
        // Names must be unique; re-key by position.
        for (i, s) in specs.iter_mut().enumerate() {
            s.name = format!("spec{i}");
        }
        MonitorDescriptor {
            goal: "generated characterization".into(),
            reference_inputs: input_kinds
                .into_iter()
                .enumerate()
                .map(|(i, kind)| ReferenceInput {
                    name: format!("in{i}"),
                    kind,
                    bounds: (i % 2 == 0).then(|| "bounded".into()),
                })
                .collect(),
            observed_outputs: output_kinds
                .into_iter()
                .enumerate()
                .map(|(i, kind)| ObservedOutput {
                    name: format!("out{i}"),
                    kind,
                })
                .collect(),
            specifications: specs,
            posthoc_traces: vec!["steps".into()],
            operator_notify: OperatorNotify {
                enabled: notify,
                channel: notify.then(|| "stderr".into()),
            },
        }
    }
}

fn arb_descriptor() -> impl Strategy<Value = MonitorDescriptor> {
    arb_valid_descriptor()
}

#[test]
fn posterior_concentrates_on_clean_streams() {
    // All-true: the posterior is Beta(1, n+1); its spread must shrink
    // monotonically as evidence accumulates.
    let mut b = BeliefState::new();
    let mut last_std = f64::INFINITY;
    for n in 1..=500 {
        b.update(z(1.0));
        let std = b.posterior_std();
        if n >= 50 {
            assert!(std <= last_std, "std grew at n={n}: {std} > {last_std}");
        }
        last_std = std;
    }
}
