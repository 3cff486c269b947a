//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Kronrod estimate, its difference from the embedded Gauss rule, and the
/// rounding floor of the panel.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    let mut mag = fc.abs();
    for i in 0..7 {
        let x = h * XGK[i];
        let (l, r) = (f(c - x), f(c + x));
        let s = l + r;
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
        mag = mag.max(l.abs()).max(r.abs());
    }
    (k * h, ((k - g) * h).abs(), 1e3 * f64::EPSILON * mag * h.abs())
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`. The interval is
/// first split into `panels` equal pieces; pieces whose error estimate
/// exceeds their share of the tolerance are bisected.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut stack: Vec<(f64, f64, usize)> = (0..panels)
        .rev()
        .map(|i| (a + width * i as f64, if i + 1 == panels { b } else { a + width * (i + 1) as f64 }, 0))
        .collect();
    let mut total = 0.0;
    let span = (b - a).abs();
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err, floor) = gk15(&f, lo, hi);
        let share = tol * (hi - lo).abs() / span;
        if err <= share.max(floor) {
            total += v;
        } else if depth >= 40 {
            return Err(Error::Numeric(format!("quadrature did not converge on [{lo}, {hi}]")));
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    Ok(total)
}

/// Vector-valued variant of [`integrate`]: `f(x, out)` fills one value per
/// component and a panel is accepted when every component meets its share of
/// `tol`. Components share the abscissae, so expensive common factors are
/// evaluated once.
pub fn integrate_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    a: f64,
    b: f64,
    panels: usize,
    tol: f64,
    out: &mut [f64],
) -> Result<()> {
    let m = out.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    if a == b {
        return Ok(());
    }
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut stack: Vec<(f64, f64, usize)> = (0..panels)
        .rev()
        .map(|i| (a + width * i as f64, if i + 1 == panels { b } else { a + width * (i + 1) as f64 }, 0))
        .collect();
    let span = (b - a).abs();
    let mut k = vec![0.0; m];
    let mut g = vec![0.0; m];
    let mut f1 = vec![0.0; m];
    let mut f2 = vec![0.0; m];
    while let Some((lo, hi, depth)) = stack.pop() {
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        f(c, &mut f1);
        let mut mag = 0.0f64;
        for j in 0..m {
            k[j] = f1[j] * WGK[7];
            g[j] = f1[j] * WG[3];
            mag = mag.max(f1[j].abs());
        }
        for i in 0..7 {
            let x = h * XGK[i];
            f(c - x, &mut f1);
            f(c + x, &mut f2);
            for j in 0..m {
                let s = f1[j] + f2[j];
                k[j] += WGK[i] * s;
                if i % 2 == 1 {
                    g[j] += WG[i / 2] * s;
                }
                mag = mag.max(f1[j].abs()).max(f2[j].abs());
            }
        }
        // Below the rounding floor of the panel further bisection cannot help.
        let share = (tol * (hi - lo).abs() / span).max(1e3 * f64::EPSILON * mag * h.abs());
        let ok = (0..m).all(|j| ((k[j] - g[j]) * h).abs() <= share);
        if ok {
            for j in 0..m {
                out[j] += k[j] * h;
            }
        } else if depth >= 40 {
            return Err(Error::Numeric(format!("quadrature did not converge on [{lo}, {hi}]")));
        } else {
            stack.push((c, hi, depth + 1));
            stack.push((lo, c, depth + 1));
        }
    }
    Ok(())
}
