use skewmix::dynamics::presets::*;
use skewmix::families::*;
use skewmix::grid::GridDensity;
use skewmix::interval::Interval;
use skewmix::transfer::TransferOperator;

fn main() {
    let skew = doubling_cos();
    let b = 4.0;
    let params = PairParams::new(5.0, b, 0.4, 1.0);
    let n_res = 1 << 12;
    let pair = random_pair(
        Interval::new(0.33, 0.33 + 0.21),
        params,
        17,
        &GridPolicy::with_spacing(1.0 / n_res as f64),
    );
    let family = StandardFamily::singleton(pair.clone(), 10.0);
    let policy = GridPolicy::with_spacing(1.0 / n_res as f64);
    let mut fam = family;
    for _ in 0..2 {
        fam = iterate_family(&fam, 1, &skew, &policy).unwrap();
    }
    println!("pairs: {}", fam.pairs.len());
    for fp in fam.pairs.iter().take(8) {
        println!("  [{:.4},{:.4}] w={:.5} word={:?} chop={}", fp.pair.interval.lo, fp.pair.interval.hi, fp.weight, fp.record.as_ref().unwrap().word, fp.record.as_ref().unwrap().chop);
    }
    let fam_density = family_density(&fam, n_res).unwrap();
    let op = TransferOperator::new(&skew, 2, n_res).unwrap();
    let direct = op.apply_source(&|x| pair.density.eval_complex(x), pair.interval, b);
    let direct = GridDensity::new(Interval::UNIT, direct).unwrap();
    // max node diff location
    let mut worst = (0usize, 0.0f64);
    for i in 0..n_res {
        let d = (fam_density.values()[i] - direct.values()[i]).norm();
        if d > worst.1 { worst = (i, d); }
    }
    println!("worst node {} x={:.6} diff={:.3e}", worst.0, worst.0 as f64/(n_res-1) as f64, worst.1);
    // print diffs around worst
    for i in worst.0.saturating_sub(3)..(worst.0+4).min(n_res) {
        let d = (fam_density.values()[i] - direct.values()[i]).norm();
        println!("  i={} x={:.6} fam={:.6} direct={:.6} diff={:.3e}", i, i as f64/(n_res-1) as f64, fam_density.values()[i].norm(), direct.values()[i].norm(), d);
    }
    println!("L1 = {:.3e}", skewmix::transfer::l1_distance(&fam_density, &direct));
}
