use proptest::prelude::*;
use tonic_core::completion::{erased_runs, Completer, CompletionModel};
use tonic_core::fec::{CodeRate, LdpcCode};
use tonic_core::gating::{gate_decisions, GatingPolicy};
use tonic_core::metrics::wilson_interval;
use tonic_core::source::{bits_for_alphabet, Token, TransitionKernel};
use tonic_core::tokenlink::{bits_to_tokens, llrs_to_posterior, tokens_to_bits};
use tonic_core::uep::{schedule, Instance};
use tonic_core::GatedSequence;

fn alphabet_and_tokens() -> impl Strategy<Value = (usize, Vec<Token>)> {
    (2usize..300).prop_flat_map(|k| (Just(k), prop::collection::vec(0..k as Token, 0..20)))
}

proptest! {
    #[test]
    fn token_bits_round_trip((k, tokens) in alphabet_and_tokens()) {
        let bits = tokens_to_bits(&tokens, k).unwrap();
        prop_assert_eq!(bits.len(), tokens.len() * bits_for_alphabet(k));
        prop_assert_eq!(bits_to_tokens(&bits, bits_for_alphabet(k)), tokens);
    }

    #[test]
    fn posterior_is_normalized(k in 2usize..200, raw in prop::collection::vec(-40.0f64..40.0, 8)) {
        let m = bits_for_alphabet(k);
        let post = llrs_to_posterior(&raw[..m], k).unwrap();
        let probs: Vec<f64> = (0..k as Token).map(|t| post.prob(0, t)).collect();
        let total: f64 = probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let best = probs.iter().copied().fold(0.0, f64::max);
        prop_assert!((post.confidence[0] - best).abs() < 1e-12);
        prop_assert!((post.hard[0] as usize) < k);
        prop_assert_eq!(post.prob(0, k as Token), 0.0);
    }

    #[test]
    fn encoded_words_satisfy_all_checks(k in 1usize..200, rate in 0usize..4, seed in 0u64..50, fill in any::<u64>()) {
        let rate = [CodeRate { num: 5, den: 6 }, CodeRate { num: 3, den: 4 }, CodeRate { num: 2, den: 3 }, CodeRate { num: 1, den: 2 }][rate];
        let code = LdpcCode::construct(k, rate, seed);
        let info: Vec<u8> = (0..k).map(|i| ((fill >> (i % 64)) & 1) as u8).collect();
        let word = code.encode(&info).unwrap();
        prop_assert!(code.syndrome_is_zero(&word));
        prop_assert_eq!(&word[..k], &info[..]);
    }

    #[test]
    fn raising_the_threshold_only_removes_tokens(conf in prop::collection::vec(0.0f64..=1.0, 1..20), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let hard: Vec<Token> = (0..conf.len() as Token).map(|i| i % 4).collect();
        let groups = vec![0; conf.len()];
        let g_lo = gate_decisions(&hard, &conf, &groups, &GatingPolicy::uniform(1, lo).unwrap(), 4).unwrap();
        let g_hi = gate_decisions(&hard, &conf, &groups, &GatingPolicy::uniform(1, hi).unwrap(), 4).unwrap();
        for (x, y) in g_lo.tokens.iter().zip(&g_hi.tokens) {
            prop_assert!(y.is_none() || x == y);
        }
    }

    #[test]
    fn completion_keeps_accepted_tokens(
        tokens in prop::collection::vec(prop::option::of(0u32..5), 1..16),
        stay in 0.0f64..1.0,
    ) {
        let kernel = TransitionKernel::Sticky { stay, base: vec![0.1, 0.2, 0.3, 0.25, 0.15] };
        let g = GatedSequence { tokens: tokens.clone(), alphabet_size: 5 };
        let out = CompletionModel::ExactMarkov { kernel }.complete(&g).unwrap().tokens;
        for (t, o) in tokens.iter().zip(&out) {
            if let Some(t) = t {
                prop_assert_eq!(t, o);
            }
            prop_assert!(*o < 5);
        }
        let covered: usize = erased_runs(&tokens).iter().map(|(a, b)| b - a).sum();
        prop_assert_eq!(covered, tokens.iter().filter(|t| t.is_none()).count());
    }

    #[test]
    fn schedule_is_feasible_and_beats_uniform(
        sizes in prop::collection::vec(1usize..20, 1..5),
        frac in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let g = sizes.len();
        let costs = vec![1.0, 1.2, 1.5, 2.0];
        let unit = |i: usize| ((seed.rotate_left(i as u32 * 7) % 1000) as f64) / 1000.0;
        let errors: Vec<Vec<f64>> = (0..g).map(|gi| (0..4).map(|p| unit(gi * 4 + p)).collect()).collect();
        let mass: Vec<f64> = (0..g).map(|gi| 0.1 + unit(40 + gi)).collect();
        let lo: f64 = sizes.iter().sum::<usize>() as f64;
        let budget = lo + frac * lo;
        let inst = Instance { masses: mass, sizes, costs, errors, budget };
        let p = schedule(&inst).unwrap();
        prop_assert!(inst.feasible(&p.assignment));
        prop_assert!(inst.best_upgrade(&p.assignment).is_none());
        let uni = inst.best_uniform().unwrap();
        prop_assert!(p.surrogate_value <= inst.surrogate(&uni));
        prop_assert!(p.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn wilson_interval_brackets_estimate(n in 1u64..5000, frac in 0.0f64..=1.0) {
        let s = (frac * n as f64).floor() as u64;
        let (lo, hi) = wilson_interval(s, n, 1.96);
        let p = s as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }
}
