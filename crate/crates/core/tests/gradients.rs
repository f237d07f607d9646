mod common;

use clem_core::seq::CellKind;
use clem_core::tensor_core::{gradient_check, FrozenNoise, ParamStore, Rng, Tape};
use clem_core::EmbedMode;

fn modes() -> Vec<EmbedMode> {
    vec![
        EmbedMode::Se { v: 10, m: 4 },
        EmbedMode::Ce { v: 10, m: 4, k: 3 },
        EmbedMode::Cae { v: 10, m: 4, k: 3 },
        EmbedMode::Me {
            v: 10,
            m: 4,
            k: 3,
            u: 4,
        },
        EmbedMode::Cc {
            v: 10,
            m: 4,
            books: 2,
            codes: 3,
        },
    ]
}

fn check(mode: EmbedMode, cell: CellKind, seqs: &[Vec<u32>], labels: &[usize]) -> f64 {
    let mut rng = Rng::new(17);
    let (arch, store) = common::random_model::<f64>(common::config(mode, cell, 3, 2), &mut rng);
    let refs: Vec<&[u32]> = seqs.iter().map(Vec::as_slice).collect();
    let mut noise = FrozenNoise::new(5);
    let report = gradient_check(&store, 1e-6, None, |tape: &mut Tape<f64>, s: &ParamStore<f64>| {
        noise.rewind();
        arch.batch_loss(tape, s, &refs, labels, Some(&mut noise))
    })
    .unwrap();
    assert!(report.checked > 0);
    report.max_rel_error
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let seq = vec![vec![3, 1, 7, 10, 2]];
    for mode in modes() {
        let err = check(mode, CellKind::Lstm, &seq, &[1]);
        assert!(err < 1e-3, "{mode:?}: {err}");
    }
}

#[test]
fn padded_batches_and_rnn_cells_check_too() {
    let seqs = vec![vec![3, 1, 7, 10, 2], vec![4, 4, 9], vec![6]];
    for mode in modes() {
        for cell in [CellKind::Lstm, CellKind::Rnn] {
            let err = check(mode, cell, &seqs, &[1, 0, 1]);
            assert!(err < 1e-3, "{mode:?} {cell:?}: {err}");
        }
    }
}

#[test]
fn batch_gradient_is_mean_of_single_gradients() {
    let mut rng = Rng::new(3);
    let seqs: Vec<Vec<u32>> = (0..8)
        .map(|_| (0..1 + rng.below(6)).map(|_| 1 + rng.below(10) as u32).collect())
        .collect();
    let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
    for mode in modes() {
        let (arch, store) = common::random_model::<f64>(common::config(mode, CellKind::Lstm, 4, 2), &mut Rng::new(9));
        // noise is drawn per timestep for the whole batch, so compare the
        // noise-free relaxation where batch composition cannot matter
        let mut batch = store.clone();
        let refs: Vec<&[u32]> = seqs.iter().map(Vec::as_slice).collect();
        let mut tape = Tape::new();
        let loss = arch.batch_loss(&mut tape, &batch, &refs, &labels, None).unwrap();
        tape.backward(loss, &mut batch).unwrap();

        let mut single = store.clone();
        for (s, &l) in seqs.iter().zip(&labels) {
            let mut tape = Tape::new();
            let loss = arch
                .batch_loss(&mut tape, &single, &[s.as_slice()], &[l], None)
                .unwrap();
            tape.backward(loss, &mut single).unwrap();
        }
        for id in store.ids() {
            for (a, b) in batch.grad(id).data().iter().zip(single.grad(id).data()) {
                assert!((a - b / 8.0).abs() < 1e-10, "{mode:?} {}", store.name(id));
            }
        }
    }
}
