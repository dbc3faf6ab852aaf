use crate::encoding::{EncodedInput, Interaction};
use crate::error::{Error, Result};
use crate::numerics::{dot, sigmoid, Matrix, Rng};

use super::rnn::{add_input_outer, add_input_product, scaled_gaussian};
use super::{binary_cross_entropy, DropoutMask, PredictionSeries, RecurrentState};

/// Gated recurrence with all four gates logistic:
///
/// ```text
/// i_t = sigmoid(W_ix x_t + W_ih h_{t-1} + b_i)
/// g_t = sigmoid(W_gx x_t + W_gh h_{t-1} + b_g)
/// f_t = sigmoid(W_fx x_t + W_fh h_{t-1} + b_f)
/// o_t = sigmoid(W_ox x_t + W_oh h_{t-1} + b_o)
/// m_t = f_t * m_{t-1} + i_t * g_t
/// h_t = o_t * m_t
/// y_t = sigmoid(W_zm m_t + b_z)
/// ```
///
/// The readout is taken from the memory cell `m_t`, not from `h_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_ix: Matrix,
    pub w_gx: Matrix,
    pub w_fx: Matrix,
    pub w_ox: Matrix,
    pub w_ih: Matrix,
    pub w_gh: Matrix,
    pub w_fh: Matrix,
    pub w_oh: Matrix,
    pub b_i: Matrix,
    pub b_g: Matrix,
    pub b_f: Matrix,
    pub b_o: Matrix,
    pub w_zm: Matrix,
    pub b_z: Matrix,
    pub h0: Matrix,
    pub m0: Matrix,
}

/// Per-step activations retained for the backward pass.
struct Trace {
    hidden: usize,
    /// `[i | g | f | o]` per step, 4H each.
    gates: Vec<f64>,
    /// `m_0 .. m_T`
    memory: Vec<f64>,
    /// `h_0 .. h_T`
    hidden_states: Vec<f64>,
}

impl Trace {
    #[inline]
    fn gates(&self, t: usize) -> &[f64] {
        &self.gates[t * 4 * self.hidden..(t + 1) * 4 * self.hidden]
    }

    /// `m_t` for t in 0..=T (index 0 is the initial memory).
    #[inline]
    fn m(&self, t: usize) -> &[f64] {
        &self.memory[t * self.hidden..(t + 1) * self.hidden]
    }

    #[inline]
    fn h(&self, t: usize) -> &[f64] {
        &self.hidden_states[t * self.hidden..(t + 1) * self.hidden]
    }
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        let w_x = || Matrix::zeros(hidden_dim, input_dim);
        let w_h = || Matrix::zeros(hidden_dim, hidden_dim);
        let b = || Matrix::zeros(hidden_dim, 1);
        LstmParams {
            w_ix: w_x(),
            w_gx: w_x(),
            w_fx: w_x(),
            w_ox: w_x(),
            w_ih: w_h(),
            w_gh: w_h(),
            w_fh: w_h(),
            w_oh: w_h(),
            b_i: b(),
            b_g: b(),
            b_f: b(),
            b_o: b(),
            w_zm: Matrix::zeros(output_dim, hidden_dim),
            b_z: Matrix::zeros(output_dim, 1),
            h0: b(),
            m0: b(),
        }
    }

    pub fn init(input_dim: usize, hidden_dim: usize, output_dim: usize, rng: &mut Rng) -> Self {
        let mut p = LstmParams::zeros(input_dim, hidden_dim, output_dim);
        for w in [&mut p.w_ix, &mut p.w_gx, &mut p.w_fx, &mut p.w_ox] {
            *w = scaled_gaussian(rng, hidden_dim, input_dim);
        }
        for w in [&mut p.w_ih, &mut p.w_gh, &mut p.w_fh, &mut p.w_oh] {
            *w = scaled_gaussian(rng, hidden_dim, hidden_dim);
        }
        p.w_zm = scaled_gaussian(rng, output_dim, hidden_dim);
        p
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("W_ix", &self.w_ix),
            ("W_gx", &self.w_gx),
            ("W_fx", &self.w_fx),
            ("W_ox", &self.w_ox),
            ("W_ih", &self.w_ih),
            ("W_gh", &self.w_gh),
            ("W_fh", &self.w_fh),
            ("W_oh", &self.w_oh),
            ("b_i", &self.b_i),
            ("b_g", &self.b_g),
            ("b_f", &self.b_f),
            ("b_o", &self.b_o),
            ("W_zm", &self.w_zm),
            ("b_z", &self.b_z),
            ("h0", &self.h0),
            ("m0", &self.m0),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("W_ix", &mut self.w_ix),
            ("W_gx", &mut self.w_gx),
            ("W_fx", &mut self.w_fx),
            ("W_ox", &mut self.w_ox),
            ("W_ih", &mut self.w_ih),
            ("W_gh", &mut self.w_gh),
            ("W_fh", &mut self.w_fh),
            ("W_oh", &mut self.w_oh),
            ("b_i", &mut self.b_i),
            ("b_g", &mut self.b_g),
            ("b_f", &mut self.b_f),
            ("b_o", &mut self.b_o),
            ("W_zm", &mut self.w_zm),
            ("b_z", &mut self.b_z),
            ("h0", &mut self.h0),
            ("m0", &mut self.m0),
        ]
    }

    pub(super) fn validate(&self) -> Result<()> {
        let h = self.w_ih.rows();
        let d = self.w_ix.cols();
        let m = self.w_zm.rows();
        if h == 0 || d == 0 || m == 0 {
            return Err(Error::ShapeInconsistency("zero-sized dimension".into()));
        }
        for (name, t) in self.tensors() {
            let want = match name {
                "W_ix" | "W_gx" | "W_fx" | "W_ox" => (h, d),
                "W_ih" | "W_gh" | "W_fh" | "W_oh" => (h, h),
                "W_zm" => (m, h),
                "b_z" => (m, 1),
                _ => (h, 1),
            };
            if t.shape() != want {
                return Err(Error::ShapeInconsistency(format!(
                    "{name} is {}x{}, expected {}x{}",
                    t.rows(),
                    t.cols(),
                    want.0,
                    want.1
                )));
            }
        }
        Ok(())
    }

    fn input_weights(&self) -> [&Matrix; 4] {
        [&self.w_ix, &self.w_gx, &self.w_fx, &self.w_ox]
    }

    fn recurrent_weights(&self) -> [&Matrix; 4] {
        [&self.w_ih, &self.w_gh, &self.w_fh, &self.w_oh]
    }

    fn biases(&self) -> [&Matrix; 4] {
        [&self.b_i, &self.b_g, &self.b_f, &self.b_o]
    }

    /// `b_k + W_kh h_prev` for the four gates, laid out `[i|g|f|o]`.
    pub(super) fn recurrent_part(&self, h_prev: &[f64], out: &mut [f64]) {
        let hd = h_prev.len();
        let wh = self.recurrent_weights();
        let bs = self.biases();
        for k in 0..4 {
            let a = &mut out[k * hd..(k + 1) * hd];
            a.copy_from_slice(bs[k].data());
            wh[k].mul_vec_acc(h_prev, a);
        }
    }

    /// Completes a step whose `gates` already hold the recurrent part.
    pub(super) fn finish_cell(&self, x: EncodedInput<'_>, m_prev: &[f64], gates: &mut [f64], m: &mut [f64], h: &mut [f64]) {
        let hd = m_prev.len();
        let wx = self.input_weights();
        for k in 0..4 {
            let a = &mut gates[k * hd..(k + 1) * hd];
            add_input_product(wx[k], x, a);
            a.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
        let (ig, fo) = gates.split_at(2 * hd);
        let (i, g) = ig.split_at(hd);
        let (f, o) = fo.split_at(hd);
        for j in 0..hd {
            m[j] = f[j] * m_prev[j] + i[j] * g[j];
            h[j] = o[j] * m[j];
        }
    }

    /// One step: fills `gates` (4H), `m` and `h`.
    fn cell(
        &self,
        x: EncodedInput<'_>,
        h_prev: &[f64],
        m_prev: &[f64],
        gates: &mut [f64],
        m: &mut [f64],
        h: &mut [f64],
    ) {
        self.recurrent_part(h_prev, gates);
        self.finish_cell(x, m_prev, gates, m, h);
    }

    pub(super) fn readout(&self, m: &[f64], scale: Option<&[f64]>, out: &mut [f64]) {
        match scale {
            None => self.w_zm.mul_vec_into(m, out),
            Some(s) => {
                let dropped: Vec<f64> = m.iter().zip(s).map(|(a, b)| a * b).collect();
                self.w_zm.mul_vec_into(&dropped, out);
            }
        }
        for (o, &b) in out.iter_mut().zip(self.b_z.data()) {
            *o = sigmoid(*o + b);
        }
    }

    fn trace(&self, inputs: &[EncodedInput<'_>]) -> Trace {
        let hd = self.w_ih.rows();
        let t_len = inputs.len();
        let mut tr = Trace {
            hidden: hd,
            gates: vec![0.0; t_len * 4 * hd],
            memory: vec![0.0; (t_len + 1) * hd],
            hidden_states: vec![0.0; (t_len + 1) * hd],
        };
        tr.memory[..hd].copy_from_slice(self.m0.data());
        tr.hidden_states[..hd].copy_from_slice(self.h0.data());
        for (t, &x) in inputs.iter().enumerate() {
            let (m_prev, m_next) = tr.memory.split_at_mut((t + 1) * hd);
            let (h_prev, h_next) = tr.hidden_states.split_at_mut((t + 1) * hd);
            self.cell(
                x,
                &h_prev[t * hd..],
                &m_prev[t * hd..],
                &mut tr.gates[t * 4 * hd..(t + 1) * 4 * hd],
                &mut m_next[..hd],
                &mut h_next[..hd],
            );
        }
        tr
    }

    /// Returns the memory states `m_1..m_T` (the readout source) and predictions.
    pub(super) fn forward(
        &self,
        inputs: &[EncodedInput<'_>],
        mask: Option<&DropoutMask>,
    ) -> (Vec<Vec<f64>>, PredictionSeries) {
        let tr = self.trace(inputs);
        let mut states = Vec::with_capacity(inputs.len());
        let mut outputs = Vec::with_capacity(inputs.len());
        for t in 0..inputs.len() {
            let m = tr.m(t + 1);
            let mut y = vec![0.0; self.w_zm.rows()];
            self.readout(m, mask.map(|d| d.step(t)), &mut y);
            states.push(m.to_vec());
            outputs.push(y);
        }
        (states, PredictionSeries { outputs })
    }

    pub(super) fn step(&self, state: &RecurrentState, x: EncodedInput<'_>) -> RecurrentState {
        let hd = self.w_ih.rows();
        let mut gates = vec![0.0; 4 * hd];
        let mut m = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        self.cell(x, &state.hidden, &state.memory, &mut gates, &mut m, &mut h);
        RecurrentState { hidden: h, memory: m }
    }

    pub(super) fn accumulate_gradient(
        &self,
        inputs: &[EncodedInput<'_>],
        steps: &[Interaction],
        mask: Option<&DropoutMask>,
        g: &mut LstmParams,
    ) -> f64 {
        let hd = self.w_ih.rows();
        let t_len = inputs.len();
        let tr = self.trace(inputs);
        let mut loss = 0.0;
        // Gradient flowing into h_t and m_t from step t+1.
        let mut dh_carry = vec![0.0; hd];
        let mut dm_carry = vec![0.0; hd];
        let mut dm = vec![0.0; hd];
        let mut da = vec![0.0; 4 * hd];
        let mut dropped = vec![0.0; hd];
        for t in (0..t_len).rev() {
            let gates = tr.gates(t);
            let (i, rest) = gates.split_at(hd);
            let (gg, rest) = rest.split_at(hd);
            let (f, o) = rest.split_at(hd);
            let m = tr.m(t + 1);
            let m_prev = tr.m(t);
            let h_prev = tr.h(t);

            for j in 0..hd {
                dm[j] = dm_carry[j] + dh_carry[j] * o[j];
            }
            if t + 1 < t_len {
                let next = steps[t + 1];
                let q = next.exercise;
                let scale = mask.map(|d| d.step(t));
                match scale {
                    Some(s) => dropped.iter_mut().zip(m.iter().zip(s)).for_each(|(d, (a, b))| *d = a * b),
                    None => dropped.copy_from_slice(m),
                }
                let p = sigmoid(dot(self.w_zm.row(q), &dropped) + self.b_z.data()[q]);
                loss += binary_cross_entropy(p, next.correct);
                let dz = p - next.label();
                for (gw, &v) in g.w_zm.row_mut(q).iter_mut().zip(&dropped) {
                    *gw += dz * v;
                }
                g.b_z.data_mut()[q] += dz;
                let w = self.w_zm.row(q);
                match scale {
                    Some(s) => {
                        for j in 0..hd {
                            dm[j] += dz * w[j] * s[j];
                        }
                    }
                    None => {
                        for j in 0..hd {
                            dm[j] += dz * w[j];
                        }
                    }
                }
            }

            // Pre-activation gradients of the four logistic gates.
            let (da_i, rest) = da.split_at_mut(hd);
            let (da_g, rest) = rest.split_at_mut(hd);
            let (da_f, da_o) = rest.split_at_mut(hd);
            for j in 0..hd {
                da_i[j] = dm[j] * gg[j] * i[j] * (1.0 - i[j]);
                da_g[j] = dm[j] * i[j] * gg[j] * (1.0 - gg[j]);
                da_f[j] = dm[j] * m_prev[j] * f[j] * (1.0 - f[j]);
                da_o[j] = dh_carry[j] * m[j] * o[j] * (1.0 - o[j]);
            }

            let x = inputs[t];
            let grads_x = [&mut g.w_ix, &mut g.w_gx, &mut g.w_fx, &mut g.w_ox];
            for (k, gw) in grads_x.into_iter().enumerate() {
                add_input_outer(gw, &da[k * hd..(k + 1) * hd], x);
            }
            let grads_h = [&mut g.w_ih, &mut g.w_gh, &mut g.w_fh, &mut g.w_oh];
            for (k, gw) in grads_h.into_iter().enumerate() {
                gw.add_outer(&da[k * hd..(k + 1) * hd], h_prev);
            }
            let grads_b = [&mut g.b_i, &mut g.b_g, &mut g.b_f, &mut g.b_o];
            for (k, gb) in grads_b.into_iter().enumerate() {
                for (b, &d) in gb.data_mut().iter_mut().zip(&da[k * hd..(k + 1) * hd]) {
                    *b += d;
                }
            }

            dh_carry.fill(0.0);
            for (k, w) in self.recurrent_weights().into_iter().enumerate() {
                w.mul_vec_transposed_acc(&da[k * hd..(k + 1) * hd], &mut dh_carry);
            }
            for j in 0..hd {
                dm_carry[j] = dm[j] * f[j];
            }
        }
        for (b, &d) in g.h0.data_mut().iter_mut().zip(&dh_carry) {
            *b += d;
        }
        for (b, &d) in g.m0.data_mut().iter_mut().zip(&dm_carry) {
            *b += d;
        }
        loss
    }
}
