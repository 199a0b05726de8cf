use crate::error::{Error, Result};

/// Dense-output solution of an autonomous system, `s` strictly increasing.
///
/// Each step `[s_k, s_{k+1}]` is covered by a quintic Hermite polynomial
/// through the states and derivatives at both ends and at the midpoint. At the
/// nodes themselves the stored states are returned unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    s: Vec<f64>,
    states: Vec<f64>,
    derivs: Vec<f64>,
    // one midpoint state and derivative per step
    mids: Vec<f64>,
    mid_derivs: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn start(dim: usize, s0: f64, y0: &[f64], f0: &[f64]) -> Self {
        Self {
            dim,
            s: vec![s0],
            states: y0.to_vec(),
            derivs: f0.to_vec(),
            mids: Vec::new(),
            mid_derivs: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, s: f64, y: &[f64], f: &[f64], mid: &[f64], fmid: &[f64]) {
        debug_assert!(s > *self.s.last().unwrap());
        self.s.push(s);
        self.states.extend_from_slice(y);
        self.derivs.extend_from_slice(f);
        self.mids.extend_from_slice(mid);
        self.mid_derivs.extend_from_slice(fmid);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored nodes (steps + 1).
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.s.len() - 1
    }

    pub fn s_start(&self) -> f64 {
        self.s[0]
    }

    pub fn s_end(&self) -> f64 {
        *self.s.last().unwrap()
    }

    pub fn node_s(&self, i: usize) -> f64 {
        self.s[i]
    }

    pub fn node_state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn node_derivative(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn first_state(&self) -> &[f64] {
        self.node_state(0)
    }

    pub fn last_state(&self) -> &[f64] {
        self.node_state(self.len() - 1)
    }

    pub fn node_params(&self) -> &[f64] {
        &self.s
    }

    fn check_span(&self, s: f64) -> Result<()> {
        if s.is_nan() || s < self.s_start() || s > self.s_end() {
            return Err(Error::OutOfSpan {
                s,
                start: self.s_start(),
                end: self.s_end(),
            });
        }
        Ok(())
    }

    /// Index `k` of the step `[s_k, s_{k+1}]` containing `s`.
    fn step_index(&self, s: f64) -> usize {
        let k = self.s.partition_point(|&x| x <= s);
        k.saturating_sub(1).min(self.steps().saturating_sub(1))
    }

    /// Interpolated state at `s`.
    pub fn eval(&self, s: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(s, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, s: f64, out: &mut [f64]) -> Result<()> {
        self.check_span(s)?;
        if let Ok(i) = self.s.binary_search_by(|x| x.total_cmp(&s)) {
            out.copy_from_slice(self.node_state(i));
            return Ok(());
        }
        let k = self.step_index(s);
        let h = self.s[k + 1] - self.s[k];
        let th = (s - self.s[k]) / h;
        for (i, o) in out.iter_mut().enumerate() {
            let [y0, c1, c2, c3, c4, c5] = self.coeffs(k, i, h);
            *o = y0 + th * (c1 + th * (c2 + th * (c3 + th * (c4 + th * c5))));
        }
        Ok(())
    }

    /// Derivative of the interpolant with respect to `s`.
    pub fn eval_derivative(&self, s: f64) -> Result<Vec<f64>> {
        self.check_span(s)?;
        if self.steps() == 0 {
            return Ok(self.node_derivative(0).to_vec());
        }
        let k = self.step_index(s);
        let h = self.s[k + 1] - self.s[k];
        let th = (s - self.s[k]) / h;
        Ok((0..self.dim)
            .map(|i| {
                let [_, c1, c2, c3, c4, c5] = self.coeffs(k, i, h);
                (c1 + th * (2.0 * c2 + th * (3.0 * c3 + th * (4.0 * c4 + th * 5.0 * c5)))) / h
            })
            .collect())
    }

    // p(θ) = y0 + c1 θ + … + c5 θ⁵ on step k, component i.
    fn coeffs(&self, k: usize, i: usize, h: f64) -> [f64; 6] {
        let d = self.dim;
        let y0 = self.states[k * d + i];
        let y1 = self.states[(k + 1) * d + i];
        let hf0 = h * self.derivs[k * d + i];
        let hf1 = h * self.derivs[(k + 1) * d + i];
        let ym = self.mids[k * d + i];
        let hfm = h * self.mid_derivs[k * d + i];
        let a = y1 - y0 - hf0;
        let b = hf1 - hf0;
        let m = ym - y0 - 0.5 * hf0;
        let dm = hfm - hf0;
        let c2 = 7.0 * a - b - 8.0 * dm + 16.0 * m;
        let c3 = -34.0 * a + 5.0 * b + 32.0 * dm - 32.0 * m;
        let c4 = 52.0 * a - 8.0 * b - 40.0 * dm + 16.0 * m;
        let c5 = -24.0 * a + 4.0 * b + 16.0 * dm;
        [y0, hf0, c2, c3, c4, c5]
    }

    /// First `s` at which `component` equals `target`.
    pub fn invert_component(&self, component: usize, target: f64) -> Result<f64> {
        if component >= self.dim {
            return Err(Error::InvalidInput(format!(
                "component {component} out of range for dimension {}",
                self.dim
            )));
        }
        self.invert_by(|y| y[component], target)
            .map_err(|_| Error::NotAttained { component, target })
    }

    /// First `s` at which the scalar functional `g(state)` equals `target`,
    /// located by a sign change at the nodes and bisection on the interpolant.
    pub fn invert_by<G: Fn(&[f64]) -> f64>(&self, g: G, target: f64) -> Result<f64> {
        let not_attained = Error::NotAttained {
            component: usize::MAX,
            target,
        };
        let mut prev = g(self.node_state(0)) - target;
        if prev == 0.0 {
            return Ok(self.s[0]);
        }
        let mut buf = vec![0.0; self.dim];
        for k in 1..self.len() {
            let cur = g(self.node_state(k)) - target;
            if cur == 0.0 {
                return Ok(self.s[k]);
            }
            if (prev < 0.0) != (cur < 0.0) {
                let (mut lo, mut hi) = (self.s[k - 1], self.s[k]);
                let lo_neg = prev < 0.0;
                loop {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    self.eval_into(mid, &mut buf)?;
                    let gm = g(&buf) - target;
                    if gm == 0.0 {
                        return Ok(mid);
                    }
                    if (gm < 0.0) == lo_neg {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                self.eval_into(lo, &mut buf)?;
                let glo = (g(&buf) - target).abs();
                self.eval_into(hi, &mut buf)?;
                let ghi = (g(&buf) - target).abs();
                return Ok(if glo <= ghi { lo } else { hi });
            }
            prev = cur;
        }
        Err(not_attained)
    }
}
