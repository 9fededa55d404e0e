use skewmix::cancellation::*;
use skewmix::dynamics::presets::*;
use skewmix::families::*;
use skewmix::interval::Interval;
use skewmix::transversality::SearchConfig;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let skew = doubling_cos();
    let b = 500.0;
    let a = 2.0;
    let eps0 = 0.45;
    let delta = 0.03;
    let params = PairParams::new(a, b, eps0, 1.0);

    let cfg = SearchConfig { depth_cap: 9, samples: 128, ..SearchConfig::default() };
    let witness = reduction_witness(&skew, delta, a, &cfg).unwrap();
    println!("witness: depth={} k_delta={} C1={:.4} Delta={:.5} M={:.3e} b0={:.2}  [{:?}]",
        witness.n_delta, witness.k_delta, witness.c1, witness.delta, witness.least_domain, witness.b0(), t0.elapsed());

    let pair = StandardPair::from_fns(Interval::new(0.31, 0.61), 4096, params,
        |x| 1.0 + 0.1*(std::f64::consts::TAU*x).sin(), |x| 0.2*a*b*x).unwrap();
    let family = StandardFamily::singleton(pair, 8.0);
    println!("boundary bound ok: {}", family.check_boundary_bound(6));

    let policy = GridPolicy::default();
    let restore = GridPolicy::modulus_only(16);
    let t1 = Instant::now();
    match weight_reduction_step(&family, &skew, delta, &witness, &policy, &restore) {
        Ok((fam, report)) => {
            println!("gamma1 = {:.6e}", report.gamma1);
            println!("m={} n_cancel={} n_restore={} total_depth={} cancelled={} skipped={}",
                report.m_steps, report.n_cancel, report.n_restore, report.total_depth, report.cancelled, report.skipped);
            println!("final pairs: {} total weight {:.12} h_budget {:.3e} arg_budget {:.3e}",
                fam.pairs.len(), fam.total_weight(), fam.h_budget, fam.arg_budget);
            for r in report.reductions.iter().take(3) {
                println!("  red: gamma={:.3e} equiv={:.3e} cells={} margins=({:.3e},{:.3e}) b0={:.1}",
                    r.gamma, r.equivalence_residual, r.oscillation_cells, r.band_margin_lo, r.band_margin_hi, r.b0);
            }
            println!("elapsed: {:?}", t1.elapsed());
        }
        Err(e) => println!("ERROR: {e}"),
    }
}
