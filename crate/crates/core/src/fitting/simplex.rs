//! Bounded Nelder–Mead simplex minimizer.

#[derive(Debug, Clone)]
pub(crate) struct SimplexOptions {
    pub max_iterations: usize,
    /// Stop once `max f − min f` over the simplex drops below this.
    pub tolerance: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn clamp_into(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// `a + t·(b − a)`
fn along(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect()
}

/// Minimizes `f` from `start` with an axis-aligned initial simplex of size `step`.
///
/// Points outside the box and NaN objective values count as +∞, so the simplex
/// stays feasible without collapsing onto a face.
pub(crate) fn minimize<F>(f: F, start: &[f64], step: &[f64], opts: &SimplexOptions) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let inside = |x: &[f64]| {
        x.iter()
            .zip(opts.lower.iter().zip(&opts.upper))
            .all(|(v, (lo, hi))| (lo..=hi).contains(&v))
    };
    let eval = |x: &[f64]| {
        if !inside(x) {
            return f64::INFINITY;
        }
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut x0 = start.to_vec();
    clamp_into(&mut x0, &opts.lower, &opts.upper);
    let mut pts = vec![x0.clone()];
    for i in 0..n {
        let mut x = x0.clone();
        x[i] += step[i];
        if x[i] > opts.upper[i] {
            x[i] = x0[i] - step[i];
        }
        clamp_into(&mut x, &opts.lower, &opts.upper);
        if x[i] == x0[i] {
            // box narrower than the step
            x[i] = 0.5 * (opts.lower[i] + opts.upper[i]);
        }
        pts.push(x);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // order best → worst; stable sort keeps the outcome deterministic on ties
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        if (vals[n] - vals[0]).abs() < opts.tolerance {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = pts[n].clone();

        let xr = along(&centroid, &worst, -REFLECT);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(&centroid, &worst, -EXPAND);
            let fe = eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(&centroid, &xr, CONTRACT);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(&centroid, &worst, CONTRACT);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        let best = pts[0].clone();
        for i in 1..=n {
            pts[i] = along(&best, &pts[i], SHRINK);
            vals[i] = eval(&pts[i]);
        }
    }

    SimplexResult {
        x: pts[0].clone(),
        f: vals[0],
        iterations,
        converged,
    }
}
