use crate::encoding::{EncodedInput, Interaction};
use crate::error::{Error, Result};
use crate::numerics::{dot, gaussian_matrix, sigmoid, Matrix, Rng};

use super::{binary_cross_entropy, DropoutMask, PredictionSeries, RecurrentState};

/// Weight init: N(0, 0.01), i.e. standard deviation 0.1.
pub(super) const INIT_STD: f64 = 0.1;

/// `h_t = tanh(W_hx x_t + W_hh h_{t-1} + b_h)`, `y_t = sigmoid(W_yh h_t + b_y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    pub w_hx: Matrix,
    pub w_hh: Matrix,
    pub b_h: Matrix,
    pub h0: Matrix,
    pub w_yh: Matrix,
    pub b_y: Matrix,
}

pub(super) fn scaled_gaussian(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let mut m = gaussian_matrix(rng, rows, cols);
    m.scale_in_place(INIT_STD);
    m
}

/// `out += W x`
#[inline]
pub(super) fn add_input_product(w: &Matrix, x: EncodedInput<'_>, out: &mut [f64]) {
    match x {
        EncodedInput::OneHot(slot) => w.add_column_into(slot, out),
        EncodedInput::Dense(v) => w.mul_vec_acc(v, out),
    }
}

/// `dW += delta x^T`
#[inline]
pub(super) fn add_input_outer(dw: &mut Matrix, delta: &[f64], x: EncodedInput<'_>) {
    match x {
        EncodedInput::OneHot(slot) => dw.add_to_column(slot, delta),
        EncodedInput::Dense(v) => dw.add_outer(delta, v),
    }
}

impl RnnParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        RnnParams {
            w_hx: Matrix::zeros(hidden_dim, input_dim),
            w_hh: Matrix::zeros(hidden_dim, hidden_dim),
            b_h: Matrix::zeros(hidden_dim, 1),
            h0: Matrix::zeros(hidden_dim, 1),
            w_yh: Matrix::zeros(output_dim, hidden_dim),
            b_y: Matrix::zeros(output_dim, 1),
        }
    }

    pub fn init(input_dim: usize, hidden_dim: usize, output_dim: usize, rng: &mut Rng) -> Self {
        RnnParams {
            w_hx: scaled_gaussian(rng, hidden_dim, input_dim),
            w_hh: scaled_gaussian(rng, hidden_dim, hidden_dim),
            w_yh: scaled_gaussian(rng, output_dim, hidden_dim),
            ..RnnParams::zeros(input_dim, hidden_dim, output_dim)
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("W_hx", &self.w_hx),
            ("W_hh", &self.w_hh),
            ("b_h", &self.b_h),
            ("h0", &self.h0),
            ("W_yh", &self.w_yh),
            ("b_y", &self.b_y),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("W_hx", &mut self.w_hx),
            ("W_hh", &mut self.w_hh),
            ("b_h", &mut self.b_h),
            ("h0", &mut self.h0),
            ("W_yh", &mut self.w_yh),
            ("b_y", &mut self.b_y),
        ]
    }

    pub(super) fn validate(&self) -> Result<()> {
        let h = self.w_hh.rows();
        let d = self.w_hx.cols();
        let m = self.w_yh.rows();
        let expect = [
            ("W_hx", &self.w_hx, (h, d)),
            ("W_hh", &self.w_hh, (h, h)),
            ("b_h", &self.b_h, (h, 1)),
            ("h0", &self.h0, (h, 1)),
            ("W_yh", &self.w_yh, (m, h)),
            ("b_y", &self.b_y, (m, 1)),
        ];
        for (name, t, shape) in expect {
            if t.shape() != shape {
                return Err(Error::ShapeInconsistency(format!(
                    "{name} is {}x{}, expected {}x{}",
                    t.rows(),
                    t.cols(),
                    shape.0,
                    shape.1
                )));
            }
        }
        if h == 0 || d == 0 || m == 0 {
            return Err(Error::ShapeInconsistency("zero-sized dimension".into()));
        }
        Ok(())
    }

    /// `b_h + W_hh h_prev`
    pub(super) fn recurrent_part(&self, h_prev: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.b_h.data());
        self.w_hh.mul_vec_acc(h_prev, out);
    }

    /// Completes a step whose `h` already holds the recurrent part.
    pub(super) fn finish_cell(&self, x: EncodedInput<'_>, h: &mut [f64]) {
        add_input_product(&self.w_hx, x, h);
        h.iter_mut().for_each(|v| *v = v.tanh());
    }

    fn cell(&self, x: EncodedInput<'_>, h_prev: &[f64], h: &mut [f64]) {
        self.recurrent_part(h_prev, h);
        self.finish_cell(x, h);
    }

    pub(super) fn readout(&self, h: &[f64], scale: Option<&[f64]>, out: &mut [f64]) {
        match scale {
            None => self.w_yh.mul_vec_into(h, out),
            Some(s) => {
                let dropped: Vec<f64> = h.iter().zip(s).map(|(a, b)| a * b).collect();
                self.w_yh.mul_vec_into(&dropped, out);
            }
        }
        for (o, &b) in out.iter_mut().zip(self.b_y.data()) {
            *o = sigmoid(*o + b);
        }
    }

    /// Hidden states `h_0 .. h_T` concatenated (row t+1 is `h_t`).
    fn hidden_states(&self, inputs: &[EncodedInput<'_>]) -> Vec<f64> {
        let hd = self.w_hh.rows();
        let mut hs = vec![0.0; (inputs.len() + 1) * hd];
        hs[..hd].copy_from_slice(self.h0.data());
        for (t, &x) in inputs.iter().enumerate() {
            let (prev, next) = hs.split_at_mut((t + 1) * hd);
            self.cell(x, &prev[t * hd..], &mut next[..hd]);
        }
        hs
    }

    pub(super) fn forward(
        &self,
        inputs: &[EncodedInput<'_>],
        mask: Option<&DropoutMask>,
    ) -> (Vec<Vec<f64>>, PredictionSeries) {
        let hd = self.w_hh.rows();
        let hs = self.hidden_states(inputs);
        let mut states = Vec::with_capacity(inputs.len());
        let mut outputs = Vec::with_capacity(inputs.len());
        for t in 0..inputs.len() {
            let h = &hs[(t + 1) * hd..(t + 2) * hd];
            let mut y = vec![0.0; self.w_yh.rows()];
            self.readout(h, mask.map(|m| m.step(t)), &mut y);
            states.push(h.to_vec());
            outputs.push(y);
        }
        (states, PredictionSeries { outputs })
    }

    pub(super) fn step(&self, state: &RecurrentState, x: EncodedInput<'_>) -> RecurrentState {
        let mut h = vec![0.0; self.w_hh.rows()];
        self.cell(x, &state.hidden, &mut h);
        RecurrentState {
            hidden: h,
            memory: Vec::new(),
        }
    }

    /// Backpropagation through time over the full sequence.
    pub(super) fn accumulate_gradient(
        &self,
        inputs: &[EncodedInput<'_>],
        steps: &[Interaction],
        mask: Option<&DropoutMask>,
        g: &mut RnnParams,
    ) -> f64 {
        let hd = self.w_hh.rows();
        let t_len = inputs.len();
        let hs = self.hidden_states(inputs);
        let mut loss = 0.0;
        let mut dh_carry = vec![0.0; hd];
        let mut dh = vec![0.0; hd];
        let mut dropped = vec![0.0; hd];
        for t in (0..t_len).rev() {
            let h = &hs[(t + 1) * hd..(t + 2) * hd];
            let h_prev = &hs[t * hd..(t + 1) * hd];
            dh.copy_from_slice(&dh_carry);
            if t + 1 < t_len {
                let next = steps[t + 1];
                let q = next.exercise;
                let scale = mask.map(|m| m.step(t));
                match scale {
                    Some(s) => dropped.iter_mut().zip(h.iter().zip(s)).for_each(|(d, (a, b))| *d = a * b),
                    None => dropped.copy_from_slice(h),
                }
                let p = sigmoid(dot(self.w_yh.row(q), &dropped) + self.b_y.data()[q]);
                loss += binary_cross_entropy(p, next.correct);
                let dz = p - next.label();
                for (gw, &v) in g.w_yh.row_mut(q).iter_mut().zip(&dropped) {
                    *gw += dz * v;
                }
                g.b_y.data_mut()[q] += dz;
                let w = self.w_yh.row(q);
                match scale {
                    Some(s) => {
                        for i in 0..hd {
                            dh[i] += dz * w[i] * s[i];
                        }
                    }
                    None => {
                        for i in 0..hd {
                            dh[i] += dz * w[i];
                        }
                    }
                }
            }
            // Through tanh.
            for i in 0..hd {
                dh[i] *= 1.0 - h[i] * h[i];
            }
            add_input_outer(&mut g.w_hx, &dh, inputs[t]);
            g.w_hh.add_outer(&dh, h_prev);
            for (b, &d) in g.b_h.data_mut().iter_mut().zip(&dh) {
                *b += d;
            }
            dh_carry.fill(0.0);
            self.w_hh.mul_vec_transposed_acc(&dh, &mut dh_carry);
        }
        for (b, &d) in g.h0.data_mut().iter_mut().zip(&dh_carry) {
            *b += d;
        }
        loss
    }
}
