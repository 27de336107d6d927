use std::fmt;

use crate::error::{Error, Result};
use crate::nn::{InitKind, TensorSpec};
use crate::transforms::{FRAME_LEN, HOP};

/// Signal transformation used by one separation core.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// Real FFT; the mask scales the noisy magnitude and keeps the noisy phase.
    Stft,
    /// Learned analysis/synthesis basis realized as bias-free 1-D conv banks.
    Learned,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Stft => "stft",
            Basis::Learned => "learned",
        })
    }
}

/// One separation core: normalization, `lstm_layers` LSTMs and a sigmoid
/// mask head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoreSpec {
    pub basis: Basis,
    pub lstm_layers: usize,
}

/// Architecture descriptor. Tensor names and shapes follow from it alone.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologySpec {
    pub name: String,
    pub cores: Vec<CoreSpec>,
    pub lstm_units: usize,
    /// `N`, the number of learned basis functions.
    pub feature_size: usize,
    pub frame_len: usize,
    pub hop: usize,
    /// Dropout between consecutive LSTM layers of a core (training only).
    pub dropout: f64,
}

pub const TOPOLOGY_NAMES: [&str; 5] = ["DTLN", "B1", "B2", "B3", "B4"];

const FEATURE_SIZE: usize = 256;
const DROPOUT: f64 = 0.25;

impl TopologySpec {
    fn registry(name: &str, cores: Vec<CoreSpec>, lstm_units: usize) -> Self {
        Self {
            name: name.to_string(),
            cores,
            lstm_units,
            feature_size: FEATURE_SIZE,
            frame_len: FRAME_LEN,
            hop: HOP,
            dropout: DROPOUT,
        }
    }

    fn two(basis: Basis) -> CoreSpec {
        CoreSpec {
            basis,
            lstm_layers: 2,
        }
    }

    /// Stacked STFT core followed by a learned-basis core, 128 units.
    pub fn dtln() -> Self {
        Self::registry(
            "DTLN",
            vec![Self::two(Basis::Stft), Self::two(Basis::Learned)],
            128,
        )
    }

    /// Four LSTM layers on the STFT.
    pub fn b1() -> Self {
        Self::registry(
            "B1",
            vec![CoreSpec {
                basis: Basis::Stft,
                lstm_layers: 4,
            }],
            166,
        )
    }

    /// Four LSTM layers on a learned basis.
    pub fn b2() -> Self {
        Self::registry(
            "B2",
            vec![CoreSpec {
                basis: Basis::Learned,
                lstm_layers: 4,
            }],
            139,
        )
    }

    /// Two stacked STFT cores.
    pub fn b3() -> Self {
        Self::registry(
            "B3",
            vec![Self::two(Basis::Stft), Self::two(Basis::Stft)],
            156,
        )
    }

    /// Two stacked learned-basis cores.
    pub fn b4() -> Self {
        Self::registry(
            "B4",
            vec![Self::two(Basis::Learned), Self::two(Basis::Learned)],
            95,
        )
    }

    /// Looks up a registered topology (case-insensitive).
    pub fn named(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "DTLN" => Ok(Self::dtln()),
            "B1" => Ok(Self::b1()),
            "B2" => Ok(Self::b2()),
            "B3" => Ok(Self::b3()),
            "B4" => Ok(Self::b4()),
            _ => Err(Error::UnknownTopology(name.to_string())),
        }
    }

    pub fn all() -> Vec<Self> {
        vec![Self::dtln(), Self::b1(), Self::b2(), Self::b3(), Self::b4()]
    }

    pub fn stacked(&self) -> bool {
        self.cores.len() > 1
    }

    pub fn num_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Width of the mask produced by a core.
    pub fn mask_width(&self, basis: Basis) -> usize {
        match basis {
            Basis::Stft => self.num_bins(),
            Basis::Learned => self.feature_size,
        }
    }

    pub fn num_lstm_layers(&self) -> usize {
        self.cores.iter().map(|c| c.lstm_layers).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| {
            Err(Error::InvalidArgument(format!(
                "topology {}: {msg}",
                self.name
            )))
        };
        if self.cores.is_empty() {
            return bad("no separation cores".into());
        }
        if self.cores.iter().any(|c| c.lstm_layers == 0) {
            return bad("a core without LSTM layers".into());
        }
        if self.lstm_units == 0 || self.feature_size == 0 {
            return bad("zero-sized layer".into());
        }
        if self.frame_len < 2 || !self.frame_len.is_multiple_of(2) {
            return bad(format!("frame length {} must be even", self.frame_len));
        }
        if self.hop == 0 || !self.frame_len.is_multiple_of(self.hop) {
            return bad(format!(
                "hop {} must divide frame length {}",
                self.hop, self.frame_len
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Ordered parameter tensors. Per core: encoder (learned), normalization,
    /// LSTM layers, mask head, decoder (learned).
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut specs = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, init: InitKind| {
            specs.push(TensorSpec { name, shape, init })
        };
        let h = self.lstm_units;
        for (c, core) in self.cores.iter().enumerate() {
            let p = format!("core{}", c + 1);
            let width = self.mask_width(core.basis);
            if core.basis == Basis::Learned {
                push(
                    format!("{p}.encoder"),
                    vec![self.feature_size, self.frame_len],
                    InitKind::Glorot,
                );
            }
            push(format!("{p}.norm.gamma"), vec![width], InitKind::Ones);
            push(format!("{p}.norm.beta"), vec![width], InitKind::Zeros);
            for l in 0..core.lstm_layers {
                let input = if l == 0 { width } else { h };
                push(
                    format!("{p}.lstm{}.w_in", l + 1),
                    vec![4 * h, input],
                    InitKind::Glorot,
                );
                push(
                    format!("{p}.lstm{}.w_rec", l + 1),
                    vec![4 * h, h],
                    InitKind::Glorot,
                );
                push(
                    format!("{p}.lstm{}.bias", l + 1),
                    vec![4 * h],
                    InitKind::Zeros,
                );
            }
            push(format!("{p}.mask.weight"), vec![width, h], InitKind::Glorot);
            push(format!("{p}.mask.bias"), vec![width], InitKind::Zeros);
            if core.basis == Basis::Learned {
                push(
                    format!("{p}.decoder"),
                    vec![self.feature_size, self.frame_len],
                    InitKind::Glorot,
                );
            }
        }
        specs
    }

    pub(crate) fn layout(&self) -> Vec<CoreLayout> {
        let mut idx = 0;
        let mut next = || {
            idx += 1;
            idx - 1
        };
        self.cores
            .iter()
            .map(|core| {
                let encoder = (core.basis == Basis::Learned).then(&mut next);
                let norm = (next(), next());
                let lstm = (0..core.lstm_layers)
                    .map(|_| [next(), next(), next()])
                    .collect();
                let mask = (next(), next());
                let decoder = (core.basis == Basis::Learned).then(&mut next);
                CoreLayout {
                    basis: core.basis,
                    encoder,
                    norm,
                    lstm,
                    mask,
                    decoder,
                }
            })
            .collect()
    }
}

/// Tensor indices of one core inside the parameter list.
#[derive(Debug, Clone)]
pub(crate) struct CoreLayout {
    pub basis: Basis,
    pub encoder: Option<usize>,
    pub norm: (usize, usize),
    pub lstm: Vec<[usize; 3]>,
    pub mask: (usize, usize),
    pub decoder: Option<usize>,
}
