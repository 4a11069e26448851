use alloc::vec::Vec;

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Nelder–Mead with the standard coefficients (1, 2, 1/2, 1/2).
///
/// Stops when the simplex fits in a max-norm ball of radius `xtol` around
/// its best vertex and the values across it differ by less than
/// `ftol * max(1, |best|)`, or when `max_evals` is spent.
pub fn minimize<F>(f: &mut F, x0: &[f64], step: f64, xtol: f64, ftol: f64, max_evals: usize) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let m = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut vals: Vec<f64> = Vec::with_capacity(m + 1);
    pts.push(x0.to_vec());
    vals.push(eval(x0, &mut evals));
    for j in 0..m {
        let mut p = x0.to_vec();
        p[j] += step;
        vals.push(eval(&p, &mut evals));
        pts.push(p);
    }
    let mut converged = false;
    loop {
        let mut idx: Vec<usize> = (0..=m).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        pts = idx.iter().map(|&i| pts[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();

        let diam = pts[1..].iter().flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
        let spread = vals[m] - vals[0];
        if diam < xtol && spread < ftol * vals[0].abs().max(1.0) {
            converged = true;
            break;
        }
        if evals >= max_evals {
            break;
        }

        let mut c = alloc::vec![0.0; m];
        for p in &pts[..m] {
            for j in 0..m {
                c[j] += p[j] / m as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { (0..m).map(|j| c[j] + t * (pts[m][j] - c[j])).collect() };

        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                pts[m] = xe;
                vals[m] = fe;
            } else {
                pts[m] = xr;
                vals[m] = fr;
            }
            continue;
        }
        if fr < vals[m - 1] {
            pts[m] = xr;
            vals[m] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[m] {
            let x = along(-0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = along(0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if fc < vals[m].min(fr) {
            pts[m] = xc;
            vals[m] = fc;
            continue;
        }
        for k in 1..=m {
            let p: Vec<f64> = (0..m).map(|j| pts[0][j] + 0.5 * (pts[k][j] - pts[0][j])).collect();
            vals[k] = eval(&p, &mut evals);
            pts[k] = p;
        }
    }
    Minimum { x: pts[0].clone(), value: vals[0], evals, converged }
}
