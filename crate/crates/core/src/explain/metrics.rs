use super::{ExplainError, ImportanceReport, Metric, Scope};
use crate::data::SequenceBatch;
use crate::engine::{self, InputJacobian, OutputSelector};
use crate::models::{Network, RecurrentNetwork, SequenceMode};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// `X1 .. Xp`.
pub fn numbered_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("X{j}")).collect()
}

fn check_names(names: &[String], p: usize) -> Result<(), ExplainError> {
    if names.len() != p {
        return Err(ExplainError::NameCount {
            names: names.len(),
            features: p,
        });
    }
    Ok(())
}

/// Root mean square of each column, accumulated in `f64` in row order.
fn column_rms<T: Scalar>(m: &Tensor2<T>) -> Vec<f64> {
    let mut sums = vec![0.0f64; m.cols()];
    for r in 0..m.rows() {
        for (s, &v) in sums.iter_mut().zip(m.row(r)) {
            let v = v.as_f64();
            *s += v * v;
        }
    }
    let n = m.rows() as f64;
    sums.into_iter().map(|s| (s / n).sqrt()).collect()
}

fn require_mode<T: Scalar>(
    model: &RecurrentNetwork<T>,
    mode: SequenceMode,
    metric: &'static str,
) -> Result<(), ExplainError> {
    if model.mode != mode {
        return Err(ExplainError::WrongMode {
            metric,
            expected: match mode {
                SequenceMode::ManyToOne => "many-to-one",
                SequenceMode::ManyToMany => "many-to-many",
            },
        });
    }
    Ok(())
}

/// Global importance from per-sample input gradients of independent samples.
pub fn global_importance_iid<T: Scalar>(
    jacobian: &InputJacobian<T>,
    names: &[String],
) -> Result<ImportanceReport, ExplainError> {
    check_names(names, jacobian.n_features())?;
    if jacobian.n_samples() == 0 {
        return Err(ExplainError::Empty);
    }
    let raw = column_rms(&jacobian.entries);
    ImportanceReport::from_raw(Scope::Global, Metric::Iid, names.to_vec(), raw, jacobian.n_samples())
}

/// Computes the Jacobian of `network` over `batch` and ranks its columns.
pub fn global_importance<T: Scalar>(
    network: &Network<T>,
    batch: &Tensor2<T>,
    selector: OutputSelector,
    names: &[String],
) -> Result<ImportanceReport, ExplainError> {
    let jac = engine::input_jacobian_batch(network, batch, selector)?;
    Ok(global_importance_iid(&jac, names)?.with_selector(selector))
}

/// Sensitivity of each sequence's output to the same-step inputs.
pub fn global_importance_many_to_one<T: Scalar>(
    model: &RecurrentNetwork<T>,
    batch: &SequenceBatch<T>,
    selector: OutputSelector,
    names: &[String],
) -> Result<ImportanceReport, ExplainError> {
    require_mode(model, SequenceMode::ManyToOne, "many-to-one importance")?;
    check_names(names, model.input_width())?;
    if batch.n_sequences() == 0 {
        return Err(ExplainError::Empty);
    }
    let by_lag = engine::rnn_input_gradients_batch(model, batch, model.seq_len - 1, selector)?;
    let raw = column_rms(&by_lag[0]);
    Ok(ImportanceReport::from_raw(
        Scope::Global,
        Metric::ManyToOne,
        names.to_vec(),
        raw,
        batch.n_sequences(),
    )?
    .with_selector(selector))
}

/// Like [`global_importance_many_to_one`] but adds the per-lag RMS of every
/// earlier step to feature `j`'s raw value.
pub fn global_importance_many_to_one_all_lags<T: Scalar>(
    model: &RecurrentNetwork<T>,
    batch: &SequenceBatch<T>,
    selector: OutputSelector,
    names: &[String],
) -> Result<ImportanceReport, ExplainError> {
    require_mode(model, SequenceMode::ManyToOne, "many-to-one importance")?;
    check_names(names, model.input_width())?;
    if batch.n_sequences() == 0 {
        return Err(ExplainError::Empty);
    }
    let by_lag = engine::rnn_input_gradients_batch(model, batch, model.seq_len - 1, selector)?;
    let mut raw = vec![0.0; model.input_width()];
    for g in &by_lag {
        for (r, v) in raw.iter_mut().zip(column_rms(g)) {
            *r += v;
        }
    }
    Ok(ImportanceReport::from_raw(
        Scope::Global,
        Metric::ManyToOneAllLags,
        names.to_vec(),
        raw,
        batch.n_sequences(),
    )?
    .with_selector(selector))
}

/// Same-step sensitivity RMS at every output position, averaged over positions.
pub fn global_importance_many_to_many<T: Scalar>(
    model: &RecurrentNetwork<T>,
    batch: &SequenceBatch<T>,
    selector: OutputSelector,
    names: &[String],
) -> Result<ImportanceReport, ExplainError> {
    require_mode(model, SequenceMode::ManyToMany, "many-to-many importance")?;
    check_names(names, model.input_width())?;
    if batch.n_sequences() == 0 {
        return Err(ExplainError::Empty);
    }
    let tau = model.seq_len;
    let mut raw = vec![0.0; model.input_width()];
    for step in 0..tau {
        let by_lag = engine::rnn_input_gradients_batch(model, batch, step, selector)?;
        for (r, v) in raw.iter_mut().zip(column_rms(&by_lag[0])) {
            *r += v;
        }
    }
    raw.iter_mut().for_each(|r| *r /= tau as f64);
    Ok(ImportanceReport::from_raw(
        Scope::Global,
        Metric::ManyToMany,
        names.to_vec(),
        raw,
        batch.n_sequences(),
    )?
    .with_selector(selector))
}

/// Squared gradient at a single input, normalized.
pub fn local_importance<T: Scalar>(
    network: &Network<T>,
    x0: &[T],
    selector: OutputSelector,
    names: &[String],
) -> Result<ImportanceReport, ExplainError> {
    check_names(names, network.input_width())?;
    let g = engine::input_gradient(network, x0, selector)?;
    let raw = g
        .iter()
        .map(|v| {
            let v = v.as_f64();
            v * v
        })
        .collect();
    Ok(
        ImportanceReport::from_raw(Scope::Local { sample: None }, Metric::Local, names.to_vec(), raw, 1)?
            .with_selector(selector),
    )
}

fn lag_names(tau: usize) -> Vec<String> {
    (0..tau).map(|k| format!("lag {k}")).collect()
}

fn lag_report<T: Scalar>(
    model: &RecurrentNetwork<T>,
    batch: &SequenceBatch<T>,
    selector: OutputSelector,
    scope: Scope,
) -> Result<ImportanceReport, ExplainError> {
    require_mode(model, SequenceMode::ManyToOne, "lag importance")?;
    if batch.n_sequences() == 0 {
        return Err(ExplainError::Empty);
    }
    let by_lag = engine::rnn_input_gradients_batch(model, batch, model.seq_len - 1, selector)?;
    let raw = by_lag.iter().map(|g| column_rms(g).into_iter().sum()).collect();
    Ok(
        ImportanceReport::from_raw(scope, Metric::Lag, lag_names(model.seq_len), raw, batch.n_sequences())?
            .with_selector(selector),
    )
}

/// Share of sensitivity carried by each lag `k` behind the final output.
pub fn lag_importance_global<T: Scalar>(
    model: &RecurrentNetwork<T>,
    batch: &SequenceBatch<T>,
    selector: OutputSelector,
) -> Result<ImportanceReport, ExplainError> {
    lag_report(model, batch, selector, Scope::LagGlobal)
}

/// Lag importance of one `seq_len x p` sequence.
pub fn lag_importance_local<T: Scalar>(
    model: &RecurrentNetwork<T>,
    sequence: &Tensor2<T>,
    selector: OutputSelector,
) -> Result<ImportanceReport, ExplainError> {
    let batch = SequenceBatch::from_sequences(std::slice::from_ref(sequence), None).map_err(|e| {
        ExplainError::Engine(engine::EngineError::ShapeMismatch {
            op: "lag importance",
            expected: "a sequence".into(),
            found: e.to_string(),
        })
    })?;
    lag_report(model, &batch, selector, Scope::LagLocal { sequence: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_mlp, build_rnn, Activation, Layer, ModelSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear(w: &[f64]) -> Network<f64> {
        Network::linear(Tensor2::row_vector(w))
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Tensor2<f64> {
        Tensor2::new(n, p, (0..n * p).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    fn random_sequences(rng: &mut ChaCha8Rng, n: usize, tau: usize, p: usize) -> SequenceBatch<f64> {
        SequenceBatch::new(
            n,
            tau,
            p,
            (0..n * tau * p).map(|_| rng.random_range(-1.5..1.5)).collect(),
            None,
        )
        .unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn linear_model_iid_and_local() {
        let net = linear(&[3.0, -1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = random_batch(&mut rng, 17, 3);
        let r = global_importance(&net, &batch, OutputSelector::Output(0), &numbered_names(3)).unwrap();
        assert!(close(&r.values_by_id(), &[75.0, 25.0, 0.0], 1e-12));
        assert_eq!(r.values_by_id()[2], 0.0);
        let l = local_importance(
            &linear(&[3.0, -1.0]),
            &[0.4, 9.0],
            OutputSelector::Output(0),
            &numbered_names(2),
        )
        .unwrap();
        assert!(close(&l.values_by_id(), &[90.0, 10.0], 1e-12));
    }

    #[test]
    fn square_has_one_active_coordinate() {
        // Only x1 feeds the unit.
        let layer = Layer::new(Tensor2::row_vector(&[1.0, 0.0, 0.0]), vec![0.0], Activation::Tanh).unwrap();
        let net = Network::new(vec![layer]).unwrap();
        let l = local_importance(&net, &[1.0, 2.0, 3.0], OutputSelector::Output(0), &numbered_names(3)).unwrap();
        assert_eq!(l.values_by_id(), vec![100.0, 0.0, 0.0]);
    }

    #[test]
    fn insensitive_model_errors() {
        let net = linear(&[0.0, 0.0]);
        let batch = Tensor2::zeros(3, 2);
        assert!(matches!(
            global_importance(&net, &batch, OutputSelector::Output(0), &numbered_names(2)),
            Err(ExplainError::Insensitive { .. })
        ));
        assert!(matches!(
            local_importance(&net, &[1.0, 1.0], OutputSelector::Output(0), &numbered_names(2)),
            Err(ExplainError::Insensitive { .. })
        ));
    }

    fn memoryless(w: &[f64], tau: usize, mode: SequenceMode) -> RecurrentNetwork<f64> {
        let p = w.len();
        RecurrentNetwork::new(
            Tensor2::row_vector(w),
            Tensor2::zeros(1, 1),
            vec![0.0],
            Activation::Linear,
            Network::linear(Tensor2::row_vector(&[1.0])),
            mode,
            tau,
        )
        .inspect(|m| assert_eq!(m.input_width(), p))
        .unwrap()
    }

    #[test]
    fn memoryless_recurrence_reduces_to_iid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = memoryless(&[3.0, -1.0], 4, SequenceMode::ManyToOne);
        let batch = random_sequences(&mut rng, 9, 4, 2);
        let r = global_importance_many_to_one(&m, &batch, OutputSelector::Output(0), &numbered_names(2)).unwrap();
        assert!(close(&r.values_by_id(), &[75.0, 25.0], 1e-12));
        let lag = lag_importance_global(&m, &batch, OutputSelector::Output(0)).unwrap();
        assert_eq!(lag.values_by_id(), vec![100.0, 0.0, 0.0, 0.0]);
        let local = lag_importance_local(&m, &batch.sequence(2), OutputSelector::Output(0)).unwrap();
        assert_eq!(local.values_by_id()[0], 100.0);
        let mm = m.with_mode(SequenceMode::ManyToMany);
        let r = global_importance_many_to_many(&mm, &batch, OutputSelector::Output(0), &numbered_names(2)).unwrap();
        assert!(close(&r.values_by_id(), &[75.0, 25.0], 1e-12));
    }

    #[test]
    fn mode_is_checked() {
        let m = memoryless(&[1.0], 2, SequenceMode::ManyToMany);
        let batch = SequenceBatch::new(1, 2, 1, vec![0.0, 1.0], None).unwrap();
        assert!(matches!(
            global_importance_many_to_one(&m, &batch, OutputSelector::Output(0), &numbered_names(1)),
            Err(ExplainError::WrongMode { .. })
        ));
        assert!(matches!(
            lag_importance_global(&m, &batch, OutputSelector::Output(0)),
            Err(ExplainError::WrongMode { .. })
        ));
    }

    #[test]
    fn geometric_lag_decay() {
        let (a, w) = (0.5, 2.0);
        let m = RecurrentNetwork::new(
            Tensor2::row_vector(&[w]),
            Tensor2::row_vector(&[a]),
            vec![0.0],
            Activation::Linear,
            Network::linear(Tensor2::row_vector(&[1.0])),
            SequenceMode::ManyToOne,
            4,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch = random_sequences(&mut rng, 5, 4, 1);
        let r = lag_importance_global(&m, &batch, OutputSelector::Output(0)).unwrap();
        let total: f64 = (0..4).map(|k| a.powi(k)).sum();
        for (k, v) in r.values_by_id().into_iter().enumerate() {
            let expected = 100.0 * a.powi(k as i32) / total;
            assert!((v - expected).abs() <= 1e-6 * expected, "lag {k}: {v} vs {expected}");
        }
    }

    #[test]
    fn identical_sequences_match_local() {
        let spec = ModelSpec::rnn(2, 3, 3, SequenceMode::ManyToOne, 11);
        let m: RecurrentNetwork<f64> = build_rnn(&spec).unwrap();
        let seq = Tensor2::from_rows(&[[0.1, -0.3], [0.7, 0.2], [-0.5, 0.9]]).unwrap();
        let batch = SequenceBatch::from_sequences(&[seq.clone(), seq.clone(), seq.clone()], None).unwrap();
        let global = lag_importance_global(&m, &batch, OutputSelector::Output(0)).unwrap();
        let local = lag_importance_local(&m, &seq, OutputSelector::Output(0)).unwrap();
        assert!(close(&global.values_by_id(), &local.values_by_id(), 1e-12));
    }

    #[test]
    fn single_step_variants_coincide_exactly() {
        let spec = ModelSpec {
            architecture: crate::models::Architecture::Rnn {
                input_width: 3,
                hidden_width: 4,
                hidden_activation: Activation::Tanh,
                head_widths: vec![2, 1],
                head_activations: vec![Activation::Relu, Activation::Linear],
                seq_len: 1,
                mode: SequenceMode::ManyToOne,
            },
            seed: 5,
        };
        let m: RecurrentNetwork<f64> = build_rnn(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = random_sequences(&mut rng, 12, 1, 3);
        let names = numbered_names(3);
        let one = global_importance_many_to_one(&m, &batch, OutputSelector::Output(0), &names).unwrap();
        let many = global_importance_many_to_many(
            &m.with_mode(SequenceMode::ManyToMany),
            &batch,
            OutputSelector::Output(0),
            &names,
        )
        .unwrap();
        assert_eq!(one.entries, many.entries);
        // The equivalent dense network: the cell as a layer, then the head.
        let mut layers = vec![Layer {
            weight: m.input_weight.clone(),
            bias: m.hidden_bias.clone(),
            activation: m.hidden_activation,
        }];
        layers.extend(m.head.layers().iter().cloned());
        let net = Network::new(layers).unwrap();
        let iid = global_importance(&net, &batch.step(0), OutputSelector::Output(0), &names).unwrap();
        assert_eq!(iid.entries, one.entries);
    }

    #[test]
    fn all_lags_variant_counts_history() {
        let m = RecurrentNetwork::new(
            Tensor2::row_vector(&[1.0, 1.0]),
            Tensor2::row_vector(&[0.5]),
            vec![0.0],
            Activation::Linear,
            Network::linear(Tensor2::row_vector(&[1.0])),
            SequenceMode::ManyToOne,
            3,
        )
        .unwrap();
        let batch = SequenceBatch::new(1, 3, 2, vec![0.0; 6], None).unwrap();
        let r =
            global_importance_many_to_one_all_lags(&m, &batch, OutputSelector::Output(0), &numbered_names(2)).unwrap();
        assert!((r.entries[0].raw - 1.75).abs() < 1e-15);
        assert_eq!(r.metric, Metric::ManyToOneAllLags);
    }

    fn random_net(seed: u64, p: usize, hidden: usize, act: Activation) -> Network<f64> {
        build_mlp(&ModelSpec::mlp(&[p, hidden, 1], &[act, Activation::Linear], seed)).unwrap()
    }

    fn act_of(i: u8) -> Activation {
        [Activation::Tanh, Activation::Relu, Activation::Linear][i as usize % 3]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reports_sum_to_100(seed in any::<u64>(), p in 1usize..6, hidden in 1usize..8, act in 0u8..3, n in 1usize..20) {
            let net = random_net(seed, p, hidden, act_of(act));
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            let batch = random_batch(&mut rng, n, p);
            let names = numbered_names(p);
            let reports = [
                global_importance(&net, &batch, OutputSelector::Output(0), &names),
                local_importance(&net, batch.row(0), OutputSelector::Output(0), &names),
            ];
            for r in reports {
                match r {
                    Ok(r) => {
                        prop_assert!((r.total() - 100.0).abs() <= 1e-9);
                        prop_assert!(r.entries.iter().all(|e| e.value >= 0.0));
                    }
                    Err(ExplainError::Insensitive { .. }) => {}
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }
            let rnn: RecurrentNetwork<f64> = build_rnn(&ModelSpec::rnn(p, hidden, 3, SequenceMode::ManyToOne, seed)).unwrap();
            let seqs = random_sequences(&mut rng, n, 3, p);
            let sel = OutputSelector::Output(0);
            for r in [
                global_importance_many_to_one(&rnn, &seqs, sel, &names),
                lag_importance_global(&rnn, &seqs, sel),
                global_importance_many_to_many(&rnn.with_mode(SequenceMode::ManyToMany), &seqs, sel, &names),
            ] {
                let r = r.unwrap();
                prop_assert!((r.total() - 100.0).abs() <= 1e-9);
                prop_assert!(r.entries.iter().all(|e| e.value >= 0.0));
            }
        }

        #[test]
        fn permuting_inputs_permutes_report(seed in any::<u64>(), p in 2usize..6, act in 0u8..3) {
            let net = random_net(seed, p, 5, act_of(act));
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
            let batch = random_batch(&mut rng, 15, p);
            let mut perm: Vec<usize> = (0..p).collect();
            perm.rotate_left(1);
            perm.swap(0, p - 1);
            let mut permuted = net.clone();
            permuted.layers_mut()[0].weight = net.layers()[0].weight.select_columns(&perm);
            let names = numbered_names(p);
            let pnames: Vec<String> = perm.iter().map(|&j| names[j].clone()).collect();
            let a = global_importance(&net, &batch, OutputSelector::Output(0), &names);
            let b = global_importance(&permuted, &batch.select_columns(&perm), OutputSelector::Output(0), &pnames);
            if let (Ok(a), Ok(b)) = (a, b) {
                let va = a.values_by_id();
                let vb = b.values_by_id();
                for (new, &old) in perm.iter().enumerate() {
                    prop_assert!((vb[new] - va[old]).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn output_scale_leaves_percentages(seed in any::<u64>(), p in 1usize..6, act in 0u8..3, k in -6i32..6, c in 0.01f64..50.0) {
            let net = random_net(seed, p, 6, act_of(act));
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
            let batch = random_batch(&mut rng, 10, p);
            let names = numbered_names(p);
            let scaled = |factor: f64| {
                let mut s = net.clone();
                let last = s.layers().len() - 1;
                let l = &mut s.layers_mut()[last];
                l.weight = l.weight.scale(factor);
                l.bias = l.bias.scale(factor);
                s
            };
            let Ok(base) = global_importance(&net, &batch, OutputSelector::Output(0), &names) else { return Ok(()) };
            // Powers of two scale every intermediate exactly.
            let two_k = 2f64.powi(k);
            let exact = global_importance(&scaled(two_k), &batch, OutputSelector::Output(0), &names).unwrap();
            prop_assert_eq!(exact.values_by_id(), base.values_by_id());
            for (r, b) in exact.raw_by_id().iter().zip(base.raw_by_id()) {
                prop_assert_eq!(*r, b * two_k);
            }
            let other = global_importance(&scaled(c), &batch, OutputSelector::Output(0), &names).unwrap();
            for (x, y) in other.values_by_id().iter().zip(base.values_by_id()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }

        #[test]
        fn dead_feature_is_exactly_zero(seed in any::<u64>(), p in 2usize..6, dead in 0usize..6, act in 0u8..3) {
            let dead = dead % p;
            let mut net = random_net(seed, p, 6, act_of(act));
            for r in 0..6 {
                net.layers_mut()[0].weight.set(r, dead, 0.0);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
            let batch = random_batch(&mut rng, 10, p);
            if let Ok(r) = global_importance(&net, &batch, OutputSelector::Output(0), &numbered_names(p)) {
                prop_assert_eq!(r.values_by_id()[dead], 0.0);
            }
        }
    }
}
