use minball::fr::{classify_asymptotics, FrEval, FrKind, FrQuery, GrowthClass};
use minball::sampling::RngState;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let st = RngState::new(42, 0);
    let ladder = vec![0.99, 0.999, 0.9999];
    let mut bad = 0;
    let mut total = 0;
    for &n in &[2usize, 3] {
        for &c in &[-1.0f64, -0.5, 0.0, 0.5, 1.0, 2.0] {
            for &s in &[0.0f64, 1.0] {
                for &d in &[0u32, 1] {
                    let q = FrQuery::new(c, s, d).with_radii(ladder.clone());
                    for kind in [FrKind::I, FrKind::J] {
                        if kind == FrKind::I && s != 0.0 { continue; }
                        let cls = classify_asymptotics(&q, kind, n, 64, FrEval::default(), &st, 1.0).unwrap();
                        let expect = if c < 0.0 { GrowthClass::Bounded }
                            else if c > 0.0 { GrowthClass::PowerGrowth(c) }
                            else { GrowthClass::LogGrowth };
                        total += 1;
                        if cls.class != expect {
                            bad += 1;
                            println!("n={n} c={c:5} s={s} d={d} {:?}: got {} rows={:?}",
                                kind, cls.class,
                                cls.rows.iter().map(|r| (r.estimate, r.compensated)).collect::<Vec<_>>());
                        }
                    }
                }
            }
        }
    }
    println!("checked {total} ladders, mismatches: {bad}, elapsed {:?}", t0.elapsed());
}
