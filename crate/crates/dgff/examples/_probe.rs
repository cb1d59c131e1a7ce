use dgff::extremes::*;
use dgff::field::ModelTag;
use dgff::limitlaw::*;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let e64 = max_ensemble(ModelTag::Gff, 64, 10_000, 101, None).unwrap();
    let e128 = max_ensemble(ModelTag::Gff, 128, 10_000, 102, None).unwrap();
    let e256 = max_ensemble(ModelTag::Gff, 256, 10_000, 103, None).unwrap();
    println!("ensembles in {:.0}s", t0.elapsed().as_secs_f64());
    for (n, e) in [(64, &e64), (128, &e128), (256, &e256)] {
        println!(
            "N={n}: mean {:.4} iqr {:.4} | exceed z=1: {} z=2: {} z=2.5: {} z=3: {} z=3.5: {}",
            e.law.mean(),
            e.law.iqr(),
            e.law.exceedance_count(1.0),
            e.law.exceedance_count(2.0),
            e.law.exceedance_count(2.5),
            e.law.exceedance_count(3.0),
            e.law.exceedance_count(3.5),
        );
    }
    // tail fit on the 256 ensemble over usable window
    match tail_fit(&e256.law, 1.0, 3.5) {
        Ok(fit) => println!("tail fit [1,3.5]: slope {:.4} alpha* {:.4}", fit.slope, fit.alpha_star),
        Err(e) => println!("tail fit [1,3.5] error: {e}"),
    }
    if let Ok(fit) = tail_fit(&e256.law, 1.0, 2.25) {
        println!("tail fit [1,2.25]: slope {:.4} (+-{:.4}) alpha* {:.4} ci {:?}",
            fit.slope, fit.slope_se, fit.alpha_star, fit.alpha_ci);
    }
    // criterion 9 probe: calibrate from 128 + 256, compare K=4 vs K=8
    let cfg = LimitLawConfig::default();
    let t0 = Instant::now();
    let params4 = calibrate(&[(&e128.law, &e128.density), (&e256.law, &e256.density)], 4, 0.125, &cfg).unwrap();
    let params8 = calibrate(&[(&e128.law, &e128.density), (&e256.law, &e256.density)], 8, 0.125, &cfg).unwrap();
    println!("calibration in {:.0}s; alpha* {:.3} gK {:.3} p {:.4}",
        t0.elapsed().as_secs_f64(), params4.alpha_star, params4.g_k, params4.bernoulli_p());
    let t0 = Instant::now();
    let s4 = LimitSampler::new(params4).unwrap();
    let s8 = LimitSampler::new(params8).unwrap();
    let c4 = compare(&e256.law, &s4, 50_000, 900).unwrap();
    let c8 = compare(&e256.law, &s8, 50_000, 901).unwrap();
    println!("compare in {:.0}s", t0.elapsed().as_secs_f64());
    println!("K=4: levy {:.4} ks {:.4} offset {:.3}", c4.levy, c4.ks, c4.offset);
    println!("K=8: levy {:.4} ks {:.4} offset {:.3}", c8.levy, c8.ks, c8.offset);
    // limit-law tail slope
    let law8 = s8.law(100_000, 77).unwrap();
    let zmin = law8.quantile(0.90);
    let zmax = law8.quantile(0.9995);
    match tail_fit(&law8, zmin, zmax) {
        Ok(f) => println!("limit tail slope {:.4} window [{:.2},{:.2}]", f.slope, zmin, zmax),
        Err(e) => println!("limit tail error {e}"),
    }
}
