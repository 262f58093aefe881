//! Point-wise mixing head applied to the summed per-plane feature vector.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MixingMode {
    /// Output = summed features unchanged.
    IdentitySum,
    /// Single linear layer W*s + b.
    Affine,
    /// Two-layer perceptron with ReLU: W2*relu(W1*s + b1) + b2.
    Mlp { hidden: usize },
}

/// Mixing function metadata. The actual weights live in the owning field's
/// flat parameter buffer; this struct only knows shapes and offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixingHead {
    pub mode: MixingMode,
    /// Input width C (the summed feature vector).
    pub input: usize,
    /// Output width (decoded channel count).
    pub output: usize,
}

impl MixingHead {
    pub fn identity(width: usize) -> Self {
        MixingHead {
            mode: MixingMode::IdentitySum,
            input: width,
            output: width,
        }
    }

    pub fn affine(input: usize, output: usize) -> Self {
        MixingHead {
            mode: MixingMode::Affine,
            input,
            output,
        }
    }

    pub fn mlp(input: usize, hidden: usize, output: usize) -> Self {
        MixingHead {
            mode: MixingMode::Mlp { hidden },
            input,
            output,
        }
    }

    pub fn param_len(&self) -> usize {
        match self.mode {
            MixingMode::IdentitySum => 0,
            MixingMode::Affine => self.output * self.input + self.output,
            MixingMode::Mlp { hidden } => {
                hidden * self.input + hidden + self.output * hidden + self.output
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 {
            return Err(Error::Config("mixing head widths must be nonzero".into()));
        }
        if self.mode == MixingMode::IdentitySum && self.input != self.output {
            return Err(Error::Config(format!(
                "identity-sum mixing requires input == output, got {} vs {}",
                self.input, self.output
            )));
        }
        if let MixingMode::Mlp { hidden } = self.mode {
            if hidden == 0 {
                return Err(Error::Config("mlp hidden width must be nonzero".into()));
            }
        }
        Ok(())
    }

    /// Scratch length needed by forward/backward (hidden activations).
    pub fn scratch_len(&self) -> usize {
        match self.mode {
            MixingMode::Mlp { hidden } => 2 * hidden,
            _ => 0,
        }
    }

    /// out = f(s). `scratch` must be at least `scratch_len()`.
    pub fn forward(&self, params: &[f64], s: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(s.len(), self.input);
        debug_assert_eq!(out.len(), self.output);
        match self.mode {
            MixingMode::IdentitySum => out.copy_from_slice(s),
            MixingMode::Affine => {
                let (w, b) = params.split_at(self.output * self.input);
                for (o, out_v) in out.iter_mut().enumerate() {
                    let row = &w[o * self.input..(o + 1) * self.input];
                    let mut acc = b[o];
                    for (wi, si) in row.iter().zip(s) {
                        acc += wi * si;
                    }
                    *out_v = acc;
                }
            }
            MixingMode::Mlp { hidden } => {
                let (w1, rest) = params.split_at(hidden * self.input);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(self.output * hidden);
                let (pre, act) = scratch.split_at_mut(hidden);
                for k in 0..hidden {
                    let row = &w1[k * self.input..(k + 1) * self.input];
                    let mut acc = b1[k];
                    for (wi, si) in row.iter().zip(s) {
                        acc += wi * si;
                    }
                    pre[k] = acc;
                    act[k] = acc.max(0.0);
                }
                for (o, out_v) in out.iter_mut().enumerate() {
                    let row = &w2[o * hidden..(o + 1) * hidden];
                    let mut acc = b2[o];
                    for (wi, hi) in row.iter().zip(act.iter()) {
                        acc += wi * hi;
                    }
                    *out_v = acc;
                }
            }
        }
    }

    /// Adjoint: accumulates d(out)·cot into `cot_s` (input cotangent) and
    /// `param_grads` (same layout as `params`). Recomputes the hidden layer.
    pub fn backward(
        &self,
        params: &[f64],
        s: &[f64],
        cot_out: &[f64],
        cot_s: &mut [f64],
        param_grads: &mut [f64],
        scratch: &mut [f64],
    ) {
        match self.mode {
            MixingMode::IdentitySum => {
                for (cs, co) in cot_s.iter_mut().zip(cot_out) {
                    *cs += co;
                }
            }
            MixingMode::Affine => {
                let w = &params[..self.output * self.input];
                let (gw, gb) = param_grads.split_at_mut(self.output * self.input);
                for (o, &co) in cot_out.iter().enumerate() {
                    gb[o] += co;
                    let row = &w[o * self.input..(o + 1) * self.input];
                    let grow = &mut gw[o * self.input..(o + 1) * self.input];
                    for i in 0..self.input {
                        cot_s[i] += co * row[i];
                        grow[i] += co * s[i];
                    }
                }
            }
            MixingMode::Mlp { hidden } => {
                let (w1, rest) = params.split_at(hidden * self.input);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, _b2) = rest.split_at(self.output * hidden);
                let (pre, act) = scratch.split_at_mut(hidden);
                for k in 0..hidden {
                    let row = &w1[k * self.input..(k + 1) * self.input];
                    let mut acc = b1[k];
                    for (wi, si) in row.iter().zip(s) {
                        acc += wi * si;
                    }
                    pre[k] = acc;
                    act[k] = acc.max(0.0);
                }

                let n_w1 = hidden * self.input;
                let n_w2 = self.output * hidden;
                let (gw1, rest_g) = param_grads.split_at_mut(n_w1);
                let (gb1, rest_g) = rest_g.split_at_mut(hidden);
                let (gw2, gb2) = rest_g.split_at_mut(n_w2);

                // backprop through the output layer into hidden cotangents
                let mut cot_h = vec![0.0; hidden];
                for (o, &co) in cot_out.iter().enumerate() {
                    gb2[o] += co;
                    let row = &w2[o * hidden..(o + 1) * hidden];
                    let grow = &mut gw2[o * hidden..(o + 1) * hidden];
                    for k in 0..hidden {
                        cot_h[k] += co * row[k];
                        grow[k] += co * act[k];
                    }
                }
                // through ReLU and the first layer
                for k in 0..hidden {
                    if pre[k] <= 0.0 {
                        continue;
                    }
                    let ch = cot_h[k];
                    gb1[k] += ch;
                    let row = &w1[k * self.input..(k + 1) * self.input];
                    let grow = &mut gw1[k * self.input..(k + 1) * self.input];
                    for i in 0..self.input {
                        cot_s[i] += ch * row[i];
                        grow[i] += ch * s[i];
                    }
                }
            }
        }
    }

    /// Input-space VJP only: cot_s += J^T cot_out (no parameter gradients).
    pub fn input_vjp(
        &self,
        params: &[f64],
        s: &[f64],
        cot_out: &[f64],
        cot_s: &mut [f64],
        scratch: &mut [f64],
    ) {
        match self.mode {
            MixingMode::IdentitySum => {
                for (cs, co) in cot_s.iter_mut().zip(cot_out) {
                    *cs += co;
                }
            }
            MixingMode::Affine => {
                let w = &params[..self.output * self.input];
                for (o, &co) in cot_out.iter().enumerate() {
                    let row = &w[o * self.input..(o + 1) * self.input];
                    for i in 0..self.input {
                        cot_s[i] += co * row[i];
                    }
                }
            }
            MixingMode::Mlp { hidden } => {
                let (w1, rest) = params.split_at(hidden * self.input);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, _b2) = rest.split_at(self.output * hidden);
                let (pre, _) = scratch.split_at_mut(hidden);
                for k in 0..hidden {
                    let row = &w1[k * self.input..(k + 1) * self.input];
                    let mut acc = b1[k];
                    for (wi, si) in row.iter().zip(s) {
                        acc += wi * si;
                    }
                    pre[k] = acc;
                }
                for k in 0..hidden {
                    if pre[k] <= 0.0 {
                        continue;
                    }
                    let mut ch = 0.0;
                    for (o, &co) in cot_out.iter().enumerate() {
                        ch += co * w2[o * hidden + k];
                    }
                    let row = &w1[k * self.input..(k + 1) * self.input];
                    for i in 0..self.input {
                        cot_s[i] += ch * row[i];
                    }
                }
            }
        }
    }

    /// Default weight initialization: near-identity pass-through scaled by
    /// fan-in, deterministic in `seed`.
    pub fn init_params(&self, seed: u64, params: &mut [f64]) {
        use rand::Rng;
        debug_assert_eq!(params.len(), self.param_len());
        match self.mode {
            MixingMode::IdentitySum => {}
            MixingMode::Affine => {
                params.fill(0.0);
                let w = &mut params[..self.output * self.input];
                for o in 0..self.output.min(self.input) {
                    w[o * self.input + o] = 1.0;
                }
            }
            MixingMode::Mlp { hidden } => {
                let mut rng = crate::rng::stream(seed, "mixing-init", 0);
                let bound1 = (1.0 / self.input as f64).sqrt();
                let bound2 = (1.0 / hidden as f64).sqrt();
                let n1 = hidden * self.input + hidden;
                for p in params[..n1].iter_mut() {
                    *p = rng.gen_range(-bound1..bound1);
                }
                for p in params[n1..].iter_mut() {
                    *p = rng.gen_range(-bound2..bound2);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn fd_check(head: &MixingHead, params: &[f64], s: &[f64]) {
        let mut scratch = vec![0.0; head.scratch_len()];
        let cot: Vec<f64> = (0..head.output).map(|i| 0.3 + 0.1 * i as f64).collect();

        let mut cot_s = vec![0.0; head.input];
        let mut gp = vec![0.0; params.len()];
        head.backward(params, s, &cot, &mut cot_s, &mut gp, &mut scratch);

        let eps = 1e-6;
        let f = |params: &[f64], s: &[f64]| -> f64 {
            let mut out = vec![0.0; head.output];
            let mut scratch = vec![0.0; head.scratch_len()];
            head.forward(params, s, &mut out, &mut scratch);
            out.iter().zip(&cot).map(|(o, c)| o * c).sum()
        };
        for i in 0..s.len() {
            let mut sp = s.to_vec();
            sp[i] += eps;
            let mut sm = s.to_vec();
            sm[i] -= eps;
            let fd = (f(params, &sp) - f(params, &sm)) / (2.0 * eps);
            assert_relative_eq!(cot_s[i], fd, max_relative = 1e-6, epsilon = 1e-9);
        }
        for i in 0..params.len() {
            let mut pp = params.to_vec();
            pp[i] += eps;
            let mut pm = params.to_vec();
            pm[i] -= eps;
            let fd = (f(&pp, s) - f(&pm, s)) / (2.0 * eps);
            assert_relative_eq!(gp[i], fd, max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn identity_sum_passes_through() {
        let head = MixingHead::identity(4);
        let s = [1.0, -2.0, 0.5, 3.0];
        let mut out = [0.0; 4];
        head.forward(&[], &s, &mut out, &mut []);
        assert_eq!(out, s);
    }

    #[test]
    fn affine_and_mlp_match_finite_differences() {
        let mut rng = crate::rng::stream(3, "test-mixing", 0);
        let s: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let affine = MixingHead::affine(5, 3);
        let mut p = vec![0.0; affine.param_len()];
        for v in p.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        fd_check(&affine, &p, &s);

        let mlp = MixingHead::mlp(5, 7, 4);
        let mut p = vec![0.0; mlp.param_len()];
        for v in p.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        fd_check(&mlp, &p, &s);
    }

    #[test]
    fn identity_requires_matching_widths() {
        let bad = MixingHead {
            mode: MixingMode::IdentitySum,
            input: 3,
            output: 4,
        };
        assert!(bad.validate().is_err());
    }
}
