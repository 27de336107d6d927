use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

use super::{dot, sigmoid};
use crate::error::{Error, Result};

/// Weights of one LSTM layer. Gate blocks are stacked in the order
/// input, forget, cell, output along the first axis.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams<'a> {
    /// `4H x D`
    pub w_in: ArrayView2<'a, f64>,
    /// `4H x H`
    pub w_rec: ArrayView2<'a, f64>,
    /// `4H`
    pub bias: ArrayView1<'a, f64>,
}

pub struct LstmGrads<'a> {
    pub w_in: ArrayViewMut2<'a, f64>,
    pub w_rec: ArrayViewMut2<'a, f64>,
    pub bias: ArrayViewMut1<'a, f64>,
}

impl LstmParams<'_> {
    pub fn hidden_size(&self) -> usize {
        self.w_rec.ncols()
    }

    pub fn input_size(&self) -> usize {
        self.w_in.ncols()
    }

    fn validate(&self) -> Result<()> {
        let h = self.hidden_size();
        if self.w_rec.nrows() != 4 * h || self.w_in.nrows() != 4 * h || self.bias.len() != 4 * h {
            return Err(Error::shape(
                "lstm parameters",
                format!("4H = {}", 4 * h),
                format!(
                    "w_in {:?}, w_rec {:?}, bias {}",
                    self.w_in.dim(),
                    self.w_rec.dim(),
                    self.bias.len()
                ),
            ));
        }
        Ok(())
    }
}

/// Hidden and cell state carried between frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: Array1::zeros(hidden),
            c: Array1::zeros(hidden),
        }
    }
}

/// Forward activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache {
    input: Array2<f64>,
    /// Post-activation gates, `T x 4H`.
    gates: Array2<f64>,
    cells: Array2<f64>,
    tanh_cells: Array2<f64>,
    hidden: Array2<f64>,
    init: LstmState,
}

impl LstmCache {
    pub fn len(&self) -> usize {
        self.input.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.input.nrows() == 0
    }

    pub fn hidden(&self) -> ArrayView2<'_, f64> {
        self.hidden.view()
    }
}

/// One time step. The returned state's `h` is the layer output.
pub fn lstm_step(
    params: &LstmParams<'_>,
    x: ArrayView1<'_, f64>,
    state: &LstmState,
) -> Result<LstmState> {
    let xs = x.insert_axis(Axis(0));
    let mut next = state.clone();
    lstm_forward(params, xs, &mut next)?;
    Ok(next)
}

/// Runs a sequence (one step per row of `xs`) from `state`, leaving the
/// final state in `state` and returning the hidden sequence.
pub fn lstm_forward(
    params: &LstmParams<'_>,
    xs: ArrayView2<'_, f64>,
    state: &mut LstmState,
) -> Result<Array2<f64>> {
    run(params, xs, state, None)
}

/// Like [`lstm_forward`] from `init`, keeping what [`lstm_backward`] needs.
pub fn lstm_forward_cached(
    params: &LstmParams<'_>,
    xs: ArrayView2<'_, f64>,
    init: &LstmState,
) -> Result<(Array2<f64>, LstmCache)> {
    let h = params.hidden_size();
    let t = xs.nrows();
    let mut cache = LstmCache {
        input: xs.to_owned(),
        gates: Array2::zeros((t, 4 * h)),
        cells: Array2::zeros((t, h)),
        tanh_cells: Array2::zeros((t, h)),
        hidden: Array2::zeros((0, h)),
        init: init.clone(),
    };
    let mut state = init.clone();
    let hidden = run(params, xs, &mut state, Some(&mut cache))?;
    cache.hidden = hidden.clone();
    Ok((hidden, cache))
}

fn run(
    params: &LstmParams<'_>,
    xs: ArrayView2<'_, f64>,
    state: &mut LstmState,
    mut cache: Option<&mut LstmCache>,
) -> Result<Array2<f64>> {
    params.validate()?;
    let h = params.hidden_size();
    if xs.ncols() != params.input_size() {
        return Err(Error::shape("lstm input", params.input_size(), xs.ncols()));
    }
    if state.h.len() != h || state.c.len() != h {
        return Err(Error::shape("lstm state", h, state.h.len()));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lstm input"));
    }

    let mut pre = super::mul_transposed(xs, params.w_in);
    pre += &params.bias;
    let w_rec = params.w_rec.as_standard_layout();
    let w_rec = w_rec.as_slice().expect("standard layout");

    let steps = xs.nrows();
    let mut hidden = Array2::zeros((steps, h));
    let mut h_prev = state.h.to_vec();
    let mut c_prev = state.c.to_vec();
    let mut gates = vec![0.0; 4 * h];
    for t in 0..steps {
        let row = pre.row(t);
        for (r, g) in gates.iter_mut().enumerate() {
            *g = row[r] + dot(&w_rec[r * h..(r + 1) * h], &h_prev);
        }
        for v in &mut gates[..2 * h] {
            *v = sigmoid(*v);
        }
        for v in &mut gates[2 * h..3 * h] {
            *v = v.tanh();
        }
        for v in &mut gates[3 * h..] {
            *v = sigmoid(*v);
        }
        let mut out = hidden.row_mut(t);
        for j in 0..h {
            let c = gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j];
            let tc = c.tanh();
            c_prev[j] = c;
            h_prev[j] = gates[3 * h + j] * tc;
            out[j] = h_prev[j];
            if let Some(cache) = cache.as_deref_mut() {
                cache.cells[[t, j]] = c;
                cache.tanh_cells[[t, j]] = tc;
            }
        }
        if let Some(cache) = cache.as_deref_mut() {
            cache
                .gates
                .row_mut(t)
                .as_slice_mut()
                .expect("standard layout")
                .copy_from_slice(&gates);
        }
    }
    state.h = Array1::from(h_prev);
    state.c = Array1::from(c_prev);
    Ok(hidden)
}

/// Backpropagation through time over the cached sequence. Parameter
/// gradients are accumulated into `grads`; the gradient w.r.t. the input
/// sequence is returned.
pub fn lstm_backward(
    params: &LstmParams<'_>,
    cache: &LstmCache,
    d_hidden: ArrayView2<'_, f64>,
    grads: LstmGrads<'_>,
) -> Result<Array2<f64>> {
    params.validate()?;
    let h = params.hidden_size();
    let steps = cache.len();
    if d_hidden.dim() != (steps, h) {
        return Err(Error::shape(
            "lstm upstream gradient",
            format!("({steps}, {h})"),
            format!("{:?}", d_hidden.dim()),
        ));
    }
    if cache.input.ncols() != params.input_size() || cache.cells.ncols() != h {
        return Err(Error::shape(
            "lstm cache",
            format!("input {} hidden {}", params.input_size(), h),
            format!(
                "input {} hidden {}",
                cache.input.ncols(),
                cache.cells.ncols()
            ),
        ));
    }

    let w_rec = params.w_rec.as_standard_layout();
    let w_rec = w_rec.as_slice().expect("standard layout");
    let mut d_pre = Array2::<f64>::zeros((steps, 4 * h));
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    for t in (0..steps).rev() {
        let gates = cache.gates.row(t);
        let tanh_c = cache.tanh_cells.row(t);
        let c_prev = if t > 0 {
            cache.cells.row(t - 1)
        } else {
            cache.init.c.view()
        };
        let mut d = d_pre.row_mut(t);
        for j in 0..h {
            let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let dh = d_hidden[[t, j]] + dh_next[j];
            let dc = dh * o * (1.0 - tanh_c[j] * tanh_c[j]) + dc_next[j];
            d[j] = dc * g * i * (1.0 - i);
            d[h + j] = dc * c_prev[j] * f * (1.0 - f);
            d[2 * h + j] = dc * i * (1.0 - g * g);
            d[3 * h + j] = dh * tanh_c[j] * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        let d = d.as_slice().expect("standard layout");
        for (r, &dr) in d.iter().enumerate() {
            if dr != 0.0 {
                for (acc, &w) in dh_next.iter_mut().zip(&w_rec[r * h..(r + 1) * h]) {
                    *acc += dr * w;
                }
            }
        }
    }

    let LstmGrads {
        mut w_in,
        mut w_rec,
        mut bias,
    } = grads;
    w_in += &d_pre.t().dot(&cache.input);
    bias += &d_pre.sum_axis(Axis(0));
    if steps > 0 {
        // h_{t-1} for every step: the initial state followed by all but the last output.
        w_rec += &d_pre
            .slice(s![0..1, ..])
            .t()
            .dot(&cache.init.h.view().insert_axis(Axis(0)));
        if steps > 1 {
            w_rec += &d_pre
                .slice(s![1.., ..])
                .t()
                .dot(&cache.hidden.slice(s![..steps - 1, ..]));
        }
    }
    Ok(d_pre.dot(&params.w_in))
}
