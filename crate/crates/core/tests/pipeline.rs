//! End-to-end pipeline checks: synthesize, deconvolve, lift, fit.

use mbtd_core::estimators::{wsf_estimate, WsfConfig};
use mbtd_core::frontend::{
    deconvolve, synthesize_received, ChannelEstimate, NoiseModel, ProbeConfig,
};
use mbtd_core::model::{BandPlan, MultipathChannel};
use mbtd_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn desk_plan() -> BandPlan {
    BandPlan::new(2.4e9, 80e6, 64, vec![0, 64, 192]).unwrap()
}

fn random_channel(rng: &mut ChaCha8Rng, plan: &BandPlan, k: usize) -> MultipathChannel {
    let ts = plan.sample_period_s();
    let min_sep = 0.1 * ts;
    let tau_max = plan.tau_max_s();
    loop {
        let mut delays: Vec<f64> = (0..k)
            .map(|_| rng.gen_range(0.02..0.9) * tau_max)
            .collect();
        delays.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if delays.windows(2).any(|w| w[1] - w[0] < min_sep) {
            continue;
        }
        let gains: Vec<C64> = (0..k)
            .map(|_| {
                let mag = rng.gen_range(0.3..1.5);
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                C64::from_polar(mag, phase)
            })
            .collect();
        return MultipathChannel::new(gains, delays, plan).unwrap();
    }
}

fn snapshots_for(
    ch: &MultipathChannel,
    plan: &BandPlan,
    noise: &NoiseModel,
    count: usize,
    seed0: u64,
) -> Vec<ChannelEstimate> {
    let probe = ProbeConfig::flat(plan);
    (0..count)
        .map(|s| {
            let y = synthesize_received(ch, plan, &probe, noise, seed0 + s as u64).unwrap();
            deconvolve(&y, &probe, noise, plan).unwrap()
        })
        .collect()
}

#[test]
fn noiseless_pipeline_recovers_every_delay() {
    let plan = desk_plan();
    let ts = plan.sample_period_s();
    let noise = NoiseModel::noiseless(plan.l_bands());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for trial in 0..10 {
        let k = 1 + trial % 3;
        let ch = random_channel(&mut rng, &plan, k);
        let snaps = snapshots_for(&ch, &plan, &noise, 1, 77 + trial as u64);
        let fit = wsf_estimate(&snaps, &WsfConfig::new(k)).unwrap();
        for (est, truth) in fit.delays_s.iter().zip(ch.delays_s()) {
            assert!(
                (est - truth).abs() < 1e-9 * ts,
                "trial {trial}, K = {k}: {est} vs {truth}"
            );
        }
    }
}

#[test]
fn noiseless_gains_are_recovered_with_the_delays() {
    let plan = desk_plan();
    let noise = NoiseModel::noiseless(plan.l_bands());
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let ch = random_channel(&mut rng, &plan, 3);
    let snaps = snapshots_for(&ch, &plan, &noise, 1, 5);
    let fit = wsf_estimate(&snaps, &WsfConfig::new(3)).unwrap();
    for (est, truth) in fit.gains.iter().zip(ch.gains()) {
        assert!(
            (est - truth).norm() < 1e-8 * truth.norm(),
            "gain {est} vs {truth}"
        );
    }
}

#[test]
fn identical_seeds_give_identical_fits() {
    let plan = desk_plan();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ch = random_channel(&mut rng, &plan, 2);
    let probe = ProbeConfig::flat(&plan);
    let snr = vec![15.0; plan.l_bands()];
    let noise = mbtd_core::frontend::sigma_from_snr(&ch, &plan, &snr).unwrap();
    let run = || {
        let snaps: Vec<ChannelEstimate> = (0..5)
            .map(|s| {
                let y = synthesize_received(&ch, &plan, &probe, &noise, 900 + s).unwrap();
                deconvolve(&y, &probe, &noise, &plan).unwrap()
            })
            .collect();
        wsf_estimate(&snaps, &WsfConfig::new(2)).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.delays_s, b.delays_s);
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.cost.to_bits(), b.cost.to_bits());
}

#[test]
fn snapshot_count_grows_the_hankel_width_not_the_height() {
    let plan = desk_plan();
    let noise = NoiseModel::new(vec![0.1; plan.l_bands()]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ch = random_channel(&mut rng, &plan, 2);
    let snaps = snapshots_for(&ch, &plan, &noise, 4, 100);
    let stacks: Vec<_> = snaps
        .iter()
        .map(|e| mbtd_core::hankel::hankel_lift(e, 22).unwrap())
        .collect();
    let fused = mbtd_core::hankel::fuse_snapshots(&stacks).unwrap();
    assert_eq!(fused.snapshots(), 4);
    assert_eq!(fused.p_rows(), 64 - 22 + 1);
    assert_eq!(fused.blocks()[0].ncols(), 4 * 22);
}
