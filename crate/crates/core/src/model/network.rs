//! Forward and backward passes over whole sequences of frames.
//!
//! Each core maps time-domain frames to time-domain frames; the first core
//! sees the noisy frames, later cores see the previous core's output frames
//! (not overlap-added). Overlap-add runs once, after the last core.

use ndarray::{Array2, ArrayView2, Zip};
use num_complex::Complex64;
use rand::RngCore;

use super::topology::CoreLayout;
use super::{Basis, ModelParams};
use crate::error::{Error, Result};
use crate::nn::{
    dense_backward, dense_forward, dropout, instant_layer_norm, instant_layer_norm_backward,
    lstm_backward, lstm_forward, lstm_forward_cached, Activation, DenseGrads, DenseParams,
    DropoutMask, GradientSet, IlnCache, IlnGrads, IlnParams, LstmCache, LstmGrads, LstmParams,
    LstmState, Tensor, ILN_EPS,
};
use crate::transforms::{
    analysis_rows, frame_signal, irfft_rows, irfft_rows_adjoint, overlap_add, overlap_add_adjoint,
    rfft_rows, rfft_rows_adjoint, synthesis_rows, synthesis_rows_backward,
};

/// Floor inside the log-magnitude compression of the STFT core.
const LOG_FLOOR: f64 = 1e-7;

fn lstm_params<'a>(tensors: &'a [Tensor], idx: &[usize; 3]) -> LstmParams<'a> {
    LstmParams {
        w_in: tensors[idx[0]].matrix(),
        w_rec: tensors[idx[1]].matrix(),
        bias: tensors[idx[2]].vector(),
    }
}

fn norm_params(tensors: &[Tensor], idx: (usize, usize)) -> IlnParams<'_> {
    IlnParams {
        gamma: tensors[idx.0].vector(),
        beta: tensors[idx.1].vector(),
        eps: ILN_EPS,
    }
}

fn dense_params(tensors: &[Tensor], idx: (usize, usize)) -> DenseParams<'_> {
    DenseParams {
        weight: tensors[idx.0].matrix(),
        bias: tensors[idx.1].vector(),
    }
}

fn pair_mut(tensors: &mut [Tensor], a: usize, b: usize) -> [&mut Tensor; 2] {
    tensors
        .get_disjoint_mut([a, b])
        .expect("distinct tensor indices")
}

/// What the LSTM stack of a core sees, before normalization.
struct CoreFront {
    spectrum: Option<Array2<Complex64>>,
    magnitude: Option<Array2<f64>>,
    /// Log-magnitude (STFT) or unnormalized features (learned).
    features: Array2<f64>,
}

fn core_front(tensors: &[Tensor], layout: &CoreLayout, frames: ArrayView2<'_, f64>) -> CoreFront {
    match layout.basis {
        Basis::Stft => {
            let spectrum = rfft_rows(frames);
            let magnitude = spectrum.mapv(|c| c.norm());
            let features = magnitude.mapv(|m| (m + LOG_FLOOR).ln());
            CoreFront {
                spectrum: Some(spectrum),
                magnitude: Some(magnitude),
                features,
            }
        }
        Basis::Learned => {
            let encoder = tensors[layout.encoder.expect("learned core has an encoder")].matrix();
            CoreFront {
                spectrum: None,
                magnitude: None,
                features: analysis_rows(frames, encoder),
            }
        }
    }
}

/// Applies the mask and maps back to time-domain frames.
fn core_back(
    tensors: &[Tensor],
    layout: &CoreLayout,
    front: &CoreFront,
    mask: &Array2<f64>,
) -> (Array2<f64>, Option<Array2<f64>>) {
    match layout.basis {
        Basis::Stft => {
            let mut z = front
                .spectrum
                .clone()
                .expect("stft core keeps its spectrum");
            z.zip_mut_with(mask, |c, &m| *c *= m);
            (irfft_rows(z.view()), None)
        }
        Basis::Learned => {
            let masked = &front.features * mask;
            let decoder = tensors[layout.decoder.expect("learned core has a decoder")].matrix();
            (synthesis_rows(masked.view(), decoder), Some(masked))
        }
    }
}

/// Inference through every core for a block of frames, advancing `states`
/// (one entry per LSTM layer, core-major).
pub(crate) fn process_frames(
    params: &ModelParams,
    frames: ArrayView2<'_, f64>,
    states: &mut [LstmState],
) -> Result<Array2<f64>> {
    let tensors = &params.tensors;
    let layouts = params.topology.layout();
    if states.len() != params.topology.num_lstm_layers() {
        return Err(Error::shape(
            "stream state",
            params.topology.num_lstm_layers(),
            states.len(),
        ));
    }
    let mut x = frames.to_owned();
    let mut s = 0;
    for layout in &layouts {
        let front = core_front(tensors, layout, x.view());
        let (mut h, _) =
            instant_layer_norm(&norm_params(tensors, layout.norm), front.features.view())?;
        for idx in &layout.lstm {
            h = lstm_forward(&lstm_params(tensors, idx), h.view(), &mut states[s])?;
            s += 1;
        }
        let mask = dense_forward(
            &dense_params(tensors, layout.mask),
            h.view(),
            Activation::Sigmoid,
        )?;
        x = core_back(tensors, layout, &front, &mask).0;
    }
    Ok(x)
}

fn check_input(params: &ModelParams, noisy: &[f64]) -> Result<()> {
    if noisy.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input audio"));
    }
    if noisy.len() < params.topology.frame_len {
        return Err(Error::InputTooShort {
            len: noisy.len(),
            frame_len: params.topology.frame_len,
        });
    }
    Ok(())
}

/// Whole-sequence inference. The output has `(K - 1) * hop + L` samples for
/// `K` complete input frames.
pub fn forward_sequence(params: &ModelParams, noisy: &[f64]) -> Result<Vec<f64>> {
    check_input(params, noisy)?;
    let topo = &params.topology;
    let frames = frame_signal(noisy, topo.frame_len, topo.hop)?;
    let mut states: Vec<LstmState> = (0..topo.num_lstm_layers())
        .map(|_| LstmState::zeros(topo.lstm_units))
        .collect();
    let out = process_frames(params, frames.view(), &mut states)?;
    overlap_add(out.view(), topo.hop)
}

struct CoreCache {
    input: Array2<f64>,
    front: CoreFront,
    norm: IlnCache,
    /// Input to each LSTM layer (after dropout for layers past the first).
    lstm: Vec<LstmCache>,
    /// `dropout[j]` was applied to the output of layer `j`.
    dropout: Vec<Option<DropoutMask>>,
    head_input: Array2<f64>,
    mask: Array2<f64>,
    masked: Option<Array2<f64>>,
}

/// Activations retained by [`forward_train`] for [`backward`].
pub struct ForwardCache {
    frames: usize,
    output_len: usize,
    cores: Vec<CoreCache>,
}

impl ForwardCache {
    /// Mask of each core, `frames x width`.
    pub fn masks(&self) -> impl Iterator<Item = ArrayView2<'_, f64>> {
        self.cores.iter().map(|c| c.mask.view())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }
}

/// Whole-sequence forward pass that keeps a cache for [`backward`].
/// Dropout is active only when `dropout_rng` is given.
pub fn forward_train(
    params: &ModelParams,
    noisy: &[f64],
    mut dropout_rng: Option<&mut dyn RngCore>,
) -> Result<(Vec<f64>, ForwardCache)> {
    check_input(params, noisy)?;
    let topo = &params.topology;
    let tensors = &params.tensors;
    let frames = frame_signal(noisy, topo.frame_len, topo.hop)?;
    let mut x = frames;
    let mut cores = Vec::with_capacity(topo.cores.len());
    for layout in topo.layout() {
        let front = core_front(tensors, &layout, x.view());
        let (mut h, norm) =
            instant_layer_norm(&norm_params(tensors, layout.norm), front.features.view())?;
        let mut lstm = Vec::with_capacity(layout.lstm.len());
        let mut masks = Vec::with_capacity(layout.lstm.len());
        for (j, idx) in layout.lstm.iter().enumerate() {
            let init = LstmState::zeros(topo.lstm_units);
            let (out, cache) = lstm_forward_cached(&lstm_params(tensors, idx), h.view(), &init)?;
            lstm.push(cache);
            h = out;
            if j + 1 < layout.lstm.len() {
                let (dropped, mask) = match dropout_rng.as_deref_mut() {
                    Some(rng) => dropout(h.view(), topo.dropout, true, rng)?,
                    None => (h, None),
                };
                h = dropped;
                masks.push(mask);
            } else {
                masks.push(None);
            }
        }
        let mask = dense_forward(
            &dense_params(tensors, layout.mask),
            h.view(),
            Activation::Sigmoid,
        )?;
        let (out, masked) = core_back(tensors, &layout, &front, &mask);
        cores.push(CoreCache {
            input: x,
            front,
            norm,
            lstm,
            dropout: masks,
            head_input: h,
            mask,
            masked,
        });
        x = out;
    }
    let output = overlap_add(x.view(), topo.hop)?;
    let cache = ForwardCache {
        frames: x.nrows(),
        output_len: output.len(),
        cores,
    };
    Ok((output, cache))
}

/// Gradients of a scalar loss w.r.t. every parameter, given `d_output`, the
/// loss gradient on the overlap-added output of [`forward_train`].
pub fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    d_output: &[f64],
) -> Result<GradientSet> {
    let topo = &params.topology;
    if d_output.len() != cache.output_len {
        return Err(Error::shape(
            "output gradient",
            cache.output_len,
            d_output.len(),
        ));
    }
    if cache.cores.len() != topo.cores.len() {
        return Err(Error::shape(
            "forward cache",
            topo.cores.len(),
            cache.cores.len(),
        ));
    }
    let tensors = &params.tensors;
    let mut grads = params.zero_grads();
    let mut d_frames = overlap_add_adjoint(d_output, cache.frames, topo.frame_len, topo.hop)?;
    let layouts = topo.layout();
    for (c, (layout, cc)) in layouts.iter().zip(&cache.cores).enumerate().rev() {
        let need_input_grad = c > 0;
        d_frames = core_backward(
            tensors,
            &mut grads.tensors,
            layout,
            cc,
            d_frames.view(),
            need_input_grad,
        )?;
    }
    Ok(grads)
}

fn core_backward(
    tensors: &[Tensor],
    grads: &mut [Tensor],
    layout: &CoreLayout,
    cc: &CoreCache,
    d_out: ArrayView2<'_, f64>,
    need_input_grad: bool,
) -> Result<Array2<f64>> {
    // Mask application and synthesis.
    let (d_mask, d_features_direct, d_spectrum_direct) = match layout.basis {
        Basis::Stft => {
            let spectrum = cc.front.spectrum.as_ref().expect("stft cache");
            let dz = irfft_rows_adjoint(d_out);
            let mut d_mask = Array2::zeros(cc.mask.dim());
            Zip::from(&mut d_mask)
                .and(&dz)
                .and(spectrum)
                .for_each(|dm, g, y| *dm = g.re * y.re + g.im * y.im);
            let mut d_spec = dz;
            d_spec.zip_mut_with(&cc.mask, |g, &m| *g *= m);
            (d_mask, None, Some(d_spec))
        }
        Basis::Learned => {
            let decoder_idx = layout.decoder.expect("learned core has a decoder");
            let masked = cc.masked.as_ref().expect("learned cache");
            let d_masked = synthesis_rows_backward(
                masked.view(),
                tensors[decoder_idx].matrix(),
                d_out,
                grads[decoder_idx].matrix_mut(),
            );
            let d_mask = &d_masked * &cc.front.features;
            let d_feat = &d_masked * &cc.mask;
            (d_mask, Some(d_feat), None)
        }
    };

    // Mask head.
    let [gw, gb] = pair_mut(grads, layout.mask.0, layout.mask.1);
    let mut d_h = dense_backward(
        &dense_params(tensors, layout.mask),
        cc.head_input.view(),
        cc.mask.view(),
        d_mask.view(),
        Activation::Sigmoid,
        DenseGrads {
            weight: gw.matrix_mut(),
            bias: gb.vector_mut(),
        },
    )?;

    // LSTM stack, last layer first.
    for (j, idx) in layout.lstm.iter().enumerate().rev() {
        if let Some(mask) = &cc.dropout[j] {
            d_h *= mask;
        }
        let [g_in, g_rec, g_b] = grads
            .get_disjoint_mut(*idx)
            .expect("distinct tensor indices");
        d_h = lstm_backward(
            &lstm_params(tensors, idx),
            &cc.lstm[j],
            d_h.view(),
            LstmGrads {
                w_in: g_in.matrix_mut(),
                w_rec: g_rec.matrix_mut(),
                bias: g_b.vector_mut(),
            },
        )?;
    }

    // Normalization.
    let [gg, gbeta] = pair_mut(grads, layout.norm.0, layout.norm.1);
    let d_features = instant_layer_norm_backward(
        &norm_params(tensors, layout.norm),
        &cc.norm,
        d_h.view(),
        IlnGrads {
            gamma: gg.vector_mut(),
            beta: gbeta.vector_mut(),
        },
    )?;

    // Analysis.
    match layout.basis {
        Basis::Stft => {
            if !need_input_grad {
                return Ok(Array2::zeros((0, 0)));
            }
            let spectrum = cc.front.spectrum.as_ref().expect("stft cache");
            let magnitude = cc.front.magnitude.as_ref().expect("stft cache");
            let mut d_spec = d_spectrum_direct.expect("stft direct path");
            Zip::from(&mut d_spec)
                .and(spectrum)
                .and(magnitude)
                .and(&d_features)
                .for_each(|g, y, &m, &dl| {
                    if m > 0.0 {
                        let d_mag = dl / (m + LOG_FLOOR);
                        *g += y * (d_mag / m);
                    }
                });
            Ok(rfft_rows_adjoint(d_spec.view()))
        }
        Basis::Learned => {
            let encoder_idx = layout.encoder.expect("learned core has an encoder");
            let mut d_feat = d_features_direct.expect("learned direct path");
            d_feat += &d_features;
            let mut g_enc = grads[encoder_idx].matrix_mut();
            g_enc += &d_feat.t().dot(&cc.input);
            if need_input_grad {
                Ok(d_feat.dot(&tensors[encoder_idx].matrix()))
            } else {
                Ok(Array2::zeros((0, 0)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, CoreSpec, TopologySpec};
    use crate::nn::gradcheck::{assert_close, numeric_grad};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny(cores: Vec<CoreSpec>) -> TopologySpec {
        TopologySpec {
            name: "tiny".into(),
            cores,
            lstm_units: 3,
            feature_size: 6,
            frame_len: 8,
            hop: 2,
            dropout: 0.25,
        }
    }

    fn signal(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Loss = sum(output * weights) so the check exercises every output sample.
    fn check_all_params(spec: TopologySpec, seed: u64, with_dropout: bool) {
        let mut params = build_model(&spec, seed).unwrap();
        // perturb biases and gains away from their trivial init values
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for t in &mut params.tensors {
            for v in &mut t.data {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let x = signal(24, seed + 1);
        let out_len = crate::transforms::ola_len(9, 8, 2);
        let weights = signal(out_len, seed + 2);
        let loss = |p: &ModelParams| {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let rng: Option<&mut dyn RngCore> = if with_dropout { Some(&mut rng) } else { None };
            let (y, _) = forward_train(p, &x, rng).unwrap();
            y.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
        };

        let mut drng = ChaCha8Rng::seed_from_u64(77);
        let drng: Option<&mut dyn RngCore> = if with_dropout { Some(&mut drng) } else { None };
        let (y, cache) = forward_train(&params, &x, drng).unwrap();
        assert_eq!(y.len(), out_len);
        let grads = backward(&params, &cache, &weights).unwrap();

        for ti in 0..params.tensors.len() {
            let mut flat = params.tensors[ti].data.clone();
            let numeric: Vec<f64> = (0..flat.len())
                .map(|i| {
                    numeric_grad(&mut flat, i, |v| {
                        let mut p = params.clone();
                        p.tensors[ti].data.copy_from_slice(v);
                        loss(&p)
                    })
                })
                .collect();
            assert_close(&grads.tensors[ti].data, &numeric, &params.tensors[ti].name);
        }
    }

    #[test]
    fn gradients_stft_then_learned() {
        check_all_params(
            tiny(vec![
                CoreSpec {
                    basis: Basis::Stft,
                    lstm_layers: 2,
                },
                CoreSpec {
                    basis: Basis::Learned,
                    lstm_layers: 2,
                },
            ]),
            1,
            true,
        );
    }

    #[test]
    fn gradients_learned_then_stft() {
        check_all_params(
            tiny(vec![
                CoreSpec {
                    basis: Basis::Learned,
                    lstm_layers: 2,
                },
                CoreSpec {
                    basis: Basis::Stft,
                    lstm_layers: 2,
                },
            ]),
            2,
            false,
        );
    }

    #[test]
    fn gradients_single_deep_core() {
        check_all_params(
            tiny(vec![CoreSpec {
                basis: Basis::Stft,
                lstm_layers: 3,
            }]),
            3,
            true,
        );
    }

    #[test]
    fn zero_input_gives_zero_output() {
        for spec in [TopologySpec::dtln(), TopologySpec::b2()] {
            let params = build_model(&spec, 0).unwrap();
            let y = forward_sequence(&params, &vec![0.0; 2048]).unwrap();
            assert_eq!(y.len(), 2048);
            assert!(y.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn fresh_model_is_finite_with_masks_in_unit_interval() {
        let params = build_model(&TopologySpec::dtln(), 4).unwrap();
        let x = signal(4000, 5);
        let (y, cache) = forward_train(&params, &x, None).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
        for mask in cache.masks() {
            assert!(mask.iter().all(|&m| m > 0.0 && m < 1.0));
        }
        assert_eq!(forward_sequence(&params, &x).unwrap(), y);
    }

    #[test]
    fn rejects_nan_and_short_input() {
        let params = build_model(&TopologySpec::b1(), 0).unwrap();
        let mut x = vec![0.1; 1000];
        x[3] = f64::NAN;
        assert!(matches!(
            forward_sequence(&params, &x),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            forward_sequence(&params, &[0.0; 100]),
            Err(Error::InputTooShort { .. })
        ));
    }
}
