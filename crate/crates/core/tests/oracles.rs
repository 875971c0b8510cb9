//! Brute-force and statistical oracles for the link pieces.

use rand::{Rng, SeedableRng};
use tonic_core::completion::{Completer, CompletionModel};
use tonic_core::fec::LdpcCode;
use tonic_core::gating::{gate_decisions, GatedSequence, GatingPolicy};
use tonic_core::metrics::{Aggregate, TrialRecord};
use tonic_core::rng::StreamRng;
use tonic_core::source::{SourceModel, Token};

fn rng(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

/// A single parity check is a tree, so one flooding iteration is exact.
#[test]
fn single_parity_check_bp_matches_bitwise_map() {
    let mut r = rng(1);
    for k in 1..=5 {
        let n = k + 1;
        let code = LdpcCode::from_rows(n, k, vec![(0..n).collect()]).unwrap();
        for _ in 0..200 {
            let llrs: Vec<f64> = (0..n).map(|_| r.random_range(-6.0..6.0)).collect();
            let out = code.decode(&llrs, 1).unwrap();
            let mut p = vec![[0.0f64; 2]; k];
            for word in 0u32..1 << n {
                let bits: Vec<u32> = (0..n).map(|j| word >> j & 1).collect();
                if bits.iter().sum::<u32>() % 2 != 0 {
                    continue;
                }
                let w: f64 =
                    bits.iter().zip(&llrs).map(|(&b, &l)| if b == 0 { l / 2.0 } else { -l / 2.0 }).sum::<f64>().exp();
                for (i, pi) in p.iter_mut().enumerate() {
                    pi[bits[i] as usize] += w;
                }
            }
            for (i, pi) in p.iter().enumerate() {
                let want = (pi[0] / pi[1]).ln();
                assert!((out.info_llrs[i] - want).abs() < 1e-9, "k={k} bit {i}: {} vs {want}", out.info_llrs[i]);
            }
        }
    }
}

fn random_gated(source: &[Token], p: f64, k: usize, r: &mut StreamRng) -> GatedSequence {
    GatedSequence { tokens: source.iter().map(|&t| (!r.random_bool(p)).then_some(t)).collect(), alphabet_size: k }
}

fn errors(a: &[Token], b: &[Token]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[test]
fn exact_markov_beats_mode_fill() {
    let model = SourceModel::random_sticky(16, 32, 0.9, 3).unwrap();
    let exact = CompletionModel::build(tonic_core::CompletionKind::ExactMarkov, &model.kernel);
    let mode = CompletionModel::build(tonic_core::CompletionKind::ModeFill, &model.kernel);
    let mut r = rng(3);
    let (mut e_exact, mut e_mode) = (0, 0);
    for _ in 0..2000 {
        let src = model.sample_tokens(&mut r).tokens;
        let g = random_gated(&src, 0.3, 16, &mut r);
        e_exact += errors(&exact.complete(&g).unwrap().tokens, &src);
        e_mode += errors(&mode.complete(&g).unwrap().tokens, &src);
    }
    assert!(e_exact < e_mode, "exact {e_exact} vs mode {e_mode}");
}

/// Erasing a wrong token and completing it is better than keeping it.
#[test]
fn erasures_beat_substitutions() {
    let model = SourceModel::random_sticky(16, 32, 0.9, 4).unwrap();
    let exact = CompletionModel::build(tonic_core::CompletionKind::ExactMarkov, &model.kernel);
    let mut r = rng(4);
    let (mut kept, mut erased) = (0, 0);
    for _ in 0..2000 {
        let src = model.sample_tokens(&mut r).tokens;
        let mut noisy = src.clone();
        let mut wrong = Vec::new();
        for (i, t) in noisy.iter_mut().enumerate() {
            if r.random_bool(0.1) {
                *t = (*t + r.random_range(1..16)) % 16;
                wrong.push(i);
            }
        }
        kept += errors(&noisy, &src);
        let mut g = GatedSequence { tokens: noisy.iter().map(|&t| Some(t)).collect(), alphabet_size: 16 };
        for &i in &wrong {
            g.tokens[i] = None;
        }
        erased += errors(&exact.complete(&g).unwrap().tokens, &src);
    }
    assert!(erased * 2 < kept, "erased {erased} vs kept {kept}");
}

#[test]
fn gate_accepts_exactly_at_or_above_threshold() {
    let mut r = rng(5);
    for _ in 0..10_000 {
        let tau = [0.0, 0.25, 0.5, 1.0][r.random_range(0..4)];
        let c: f64 = if r.random_bool(0.2) { tau } else { r.random() };
        let policy = GatingPolicy::uniform(1, tau).unwrap();
        let g = gate_decisions(&[3], &[c], &[0], &policy, 8).unwrap();
        assert_eq!(g.tokens[0].is_some(), c >= tau, "c={c} tau={tau}");
    }
}

fn random_record(r: &mut StreamRng) -> TrialRecord {
    let l = r.random_range(1..=12);
    let source: Vec<Token> = (0..l).map(|_| r.random_range(0..4)).collect();
    let hard: Vec<Token> = source.iter().map(|&t| if r.random_bool(0.3) { (t + 1) % 4 } else { t }).collect();
    let gated: Vec<Option<Token>> = hard.iter().map(|&t| (!r.random_bool(0.3)).then_some(t)).collect();
    let completed = gated.iter().map(|t| t.unwrap_or(0)).collect();
    TrialRecord {
        source,
        hard,
        gated,
        completed,
        confidence: vec![0.9; l],
        prediction: r.random_range(0..2),
        label: r.random_range(0..2),
        loss: r.random(),
    }
}

fn close(a: &Aggregate, b: &Aggregate) -> bool {
    let f = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(1.0);
    a.trials == b.trials
        && a.correct == b.correct
        && a.positions == b.positions
        && a.accepted == b.accepted
        && a.hard_errors == b.hard_errors
        && f(a.loss_sum, b.loss_sum)
        && f(a.ter_sum, b.ter_sum)
        && f(a.ter_sq_sum, b.ter_sq_sum)
        && f(a.war_sum, b.war_sum)
        && f(a.war_sq_sum, b.war_sq_sum)
}

#[test]
fn aggregate_merge_is_associative_and_matches_batch() {
    let mut r = rng(6);
    let recs: Vec<TrialRecord> = (0..300).map(|_| random_record(&mut r)).collect();
    let batch = Aggregate::from_records(&recs);
    let parts: Vec<Aggregate> = recs.chunks(70).map(Aggregate::from_records).collect();
    let mut left = Aggregate::default();
    for p in &parts {
        left.merge(p);
    }
    let mut right = Aggregate::default();
    for p in parts.iter().rev() {
        let mut acc = p.clone();
        acc.merge(&right);
        right = acc;
    }
    assert!(close(&left, &batch));
    assert!(close(&right, &batch));
    let mut streaming = Aggregate::default();
    recs.iter().for_each(|x| streaming.push(x));
    assert_eq!(streaming, batch);
}
