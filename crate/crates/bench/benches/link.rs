use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use tonic_core::fec::PolicySet;
use tonic_core::gating::GatedSequence;
use tonic_core::harness::{run_trial, PointContext, RunConfig, Variant, World};
use tonic_core::link::{LinkParams, LinkPlan};
use tonic_core::phy::{apply_channel, demap_llr, modulate_16qam, noise_variance_for, ChannelRealization};
use tonic_core::rng::Purpose;
use tonic_core::{ChannelKind, ChannelSpec, Completer, GatingPolicy};

fn decode(c: &mut Criterion) {
    let set = PolicySet::new(&PolicySet::default_rates(), 4, 1024, 0).unwrap();
    let half = set.len() - 1;
    let info: Vec<u8> = (0..1024).map(|i| (i * 7 % 3 == 0) as u8).collect();
    let coded = set.encode(half, &info);
    for snr in [4.0, 12.0] {
        let ch = ChannelRealization::awgn(noise_variance_for(snr, 1.0), 1);
        let rx = apply_channel(&modulate_16qam(&coded, 1.0).unwrap(), &ch);
        let llrs = demap_llr(&rx, &ch, 1.0).unwrap().llrs;
        c.bench_function(&format!("ldpc_decode_r12_k1024_{snr}db"), |b| {
            b.iter(|| set.decode(half, 1024, black_box(&llrs), 50).unwrap())
        });
    }
}

fn demap(c: &mut Criterion) {
    let bits: Vec<u8> = (0..4096).map(|i| (i % 5 == 0) as u8).collect();
    let ch = ChannelRealization::awgn(noise_variance_for(8.0, 1.0), 2);
    let rx = apply_channel(&modulate_16qam(&bits, 1.0).unwrap(), &ch);
    c.bench_function("demap_1024_symbols", |b| b.iter(|| demap_llr(black_box(&rx), &ch, 1.0).unwrap()));
}

fn completion(c: &mut Criterion) {
    let world = World::build(&RunConfig::default()).unwrap();
    let s = world.sample(1, Purpose::Sample, &[0]);
    let tokens = s.tokens.tokens.iter().enumerate().map(|(i, &t)| (i % 3 != 0).then_some(t)).collect();
    let gated = GatedSequence { tokens, alphabet_size: 16 };
    c.bench_function("exact_markov_completion_L16", |b| {
        b.iter(|| world.completer.complete(black_box(&gated)).unwrap())
    });
}

fn trial(c: &mut Criterion) {
    let world = World::build(&RunConfig::default()).unwrap();
    let group_of: Vec<usize> = (0..16).map(|i| i / 4).collect();
    let ctx = PointContext {
        variant: Variant::FullGrad,
        plan: LinkPlan::from_group_map(&group_of, vec![4, 4, 3, 2]),
        group_of,
        gating: Some(GatingPolicy::uniform(4, 0.8).unwrap()),
        params: LinkParams { alphabet_size: 16, power: 1.0, budget: 32, max_iters: 50 },
    };
    let s = world.sample(1, Purpose::Sample, &[0]);
    let ch = ChannelSpec::new(ChannelKind::Rayleigh).realize(8.0, 1.0, 3);
    c.bench_function("full_trial_L16_rayleigh_8db", |b| {
        b.iter(|| run_trial(&world, &ctx, black_box(&s), &ch).unwrap())
    });
}

criterion_group!(benches, decode, demap, completion, trial);
criterion_main!(benches);
