use skewmix::cancellation::*;
use skewmix::dynamics::presets::*;
use skewmix::families::*;
use skewmix::grid::GridDensity;
use skewmix::transversality::SearchConfig;
use skewmix::Complex;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let skew = doubling_cos();
    let b = 8.0;
    let a = 2.0;
    let eps0 = 0.9;
    let delta = 0.05;
    let params = PairParams::new(a, b, eps0, 1.0);
    let cfg = SearchConfig { depth_cap: 9, samples: 128, ..SearchConfig::default() };
    let witness = reduction_witness(&skew, delta, a, &cfg).unwrap();
    println!("witness depth={} k={} C1={:.3} b0={:.2} [{:?}]", witness.n_delta, witness.k_delta, witness.c1, witness.b0(), t0.elapsed());

    let g0 = GridDensity::full_circle_from_fn(4096, |x| {
        Complex::new(1.0 + 0.3 * (std::f64::consts::TAU * x).sin(), 0.0)
    }).unwrap();
    let policy = GridPolicy::default();
    let restore = GridPolicy::modulus_only(16);
    let t1 = Instant::now();
    match decay_loop(&g0, &skew, params, 2, delta, &witness, &policy, &restore, 1 << 12) {
        Ok(rep) => {
            println!("W0 = {:.4}, total gamma = {:.4e}", rep.initial_weight, rep.total_gamma);
            for cp in &rep.checkpoints {
                println!("  depth {} bound {:.6e} direct {:.6e} gamma1 {:.3e} ok={}",
                    cp.depth, cp.family_bound, cp.direct_norm, cp.gamma1, cp.direct_norm <= cp.family_bound * 1.000001);
            }
            println!("elapsed {:?}", t1.elapsed());
        }
        Err(e) => println!("ERROR: {e}"),
    }
}
