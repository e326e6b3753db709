//! Adaptive Dormand–Prince 5(4) integrator for real autonomous systems.
//!
//! Only used by verification oracles, so it favours plainness over speed.

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub completed: bool,
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(y)` from 0 to `t_end` in place.
pub fn dopri5<F>(f: F, y: &mut [f64], t_end: f64, tol: Tolerances) -> OdeStats
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = y.len();
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let mut t = 0.0;
    let mut h = (t_end * 1e-6).max(1e-9).min(t_end);
    let mut stats = OdeStats {
        accepted: 0,
        rejected: 0,
        completed: false,
    };

    f(y, &mut k[0]);
    while t < t_end {
        if stats.accepted + stats.rejected >= tol.max_steps {
            return stats;
        }
        if t + h > t_end {
            h = t_end - t;
        }
        for s in 1..7 {
            let (done, rest) = k.split_at_mut(s);
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in done.iter().enumerate() {
                    acc += h * A[s][j] * kj[i];
                }
                tmp[i] = acc;
            }
            f(&tmp, &mut rest[0]);
        }
        let mut err = 0.0f64;
        for i in 0..n {
            let mut hi = y[i];
            let mut lo = y[i];
            for s in 0..7 {
                hi += h * B5[s] * k[s][i];
                lo += h * B4[s] * k[s][i];
            }
            y5[i] = hi;
            let scale = tol.atol + tol.rtol * y[i].abs().max(hi.abs());
            err = err.max(((hi - lo) / scale).abs());
        }
        if err <= 1.0 {
            t += h;
            y.copy_from_slice(&y5);
            // FSAL: the 7th stage is f at the new point.
            let last = k[6].clone();
            k[0].copy_from_slice(&last);
            stats.accepted += 1;
        } else {
            stats.rejected += 1;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    stats.completed = true;
    stats
}
