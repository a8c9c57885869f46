//! Versioned little-endian binary format for networks and optimizer state.
//!
//! Network: `b"EVNN"`, `u16` version, `u32` layer count, `u32` sizes, `u8`
//! hidden activation tag (0 = ReLU), `u8` output activation tag, then per
//! layer the weights (row-major, `fan_in x fan_out`) followed by the biases,
//! all `f64`.
//!
//! Optimizer: `b"EVAD"`, `u16` version, `f64` lr, beta1, beta2, eps, `u64`
//! step, `u32` layer count, `u32` sizes, then the first-moment arrays and the
//! second-moment arrays in network declaration order.

use ndarray::{Array1, Array2};

use super::{Gradients, Layer, Mlp, NnError, OptimizerState, OutputActivation};

pub const FORMAT_VERSION: u16 = 1;
const NET_MAGIC: &[u8; 4] = b"EVNN";
const OPT_MAGIC: &[u8; 4] = b"EVAD";
const RELU_TAG: u8 = 0;

/// Cursor over a byte slice that reports truncation instead of panicking.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(NnError::Truncated)?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<(), NnError> {
        let got = self.take(4)?;
        if got != expected {
            return Err(NnError::Format(format!("bad magic {got:?}, expected {expected:?}")));
        }
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            return Err(NnError::Version { found: version, expected: FORMAT_VERSION });
        }
        Ok(())
    }

    fn sizes(&mut self) -> Result<Vec<usize>, NnError> {
        let n = self.u32()? as usize;
        if n < 2 || n > 64 {
            return Err(NnError::Format(format!("implausible layer count {n}")));
        }
        let sizes = (0..n).map(|_| self.u32().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
        if sizes.contains(&0) {
            return Err(NnError::Format("zero-width layer".into()));
        }
        Ok(sizes)
    }

    fn arrays(&mut self, sizes: &[usize]) -> Result<(Vec<Array2<f64>>, Vec<Array1<f64>>), NnError> {
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let count = fan_in.checked_mul(fan_out).ok_or(NnError::Truncated)?;
            if count.saturating_mul(8) > self.remaining() {
                return Err(NnError::Truncated);
            }
            let flat = (0..count).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
            weights.push(Array2::from_shape_vec((fan_in, fan_out), flat).unwrap());
            let bias = (0..fan_out).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
            biases.push(Array1::from_vec(bias));
        }
        Ok((weights, biases))
    }
}

fn put_sizes(out: &mut Vec<u8>, sizes: &[usize]) {
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &s in sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
}

fn put_arrays(out: &mut Vec<u8>, g: &Gradients) {
    for (w, b) in g.weights.iter().zip(&g.biases) {
        for v in w.iter().chain(b.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

impl Mlp {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.param_count());
        out.extend_from_slice(NET_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_sizes(&mut out, self.sizes());
        out.push(RELU_TAG);
        out.push(self.output_activation().tag());
        for l in self.layers() {
            for v in l.weights.iter().chain(l.bias.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn read_from(reader: &mut Reader<'_>) -> Result<Self, NnError> {
        reader.magic(NET_MAGIC)?;
        let sizes = reader.sizes()?;
        let hidden = reader.u8()?;
        if hidden != RELU_TAG {
            return Err(NnError::Format(format!("unknown hidden activation tag {hidden}")));
        }
        let output = OutputActivation::from_tag(reader.u8()?)?;
        let (weights, biases) = reader.arrays(&sizes)?;
        let layers = weights.into_iter().zip(biases).map(|(weights, bias)| Layer { weights, bias }).collect();
        Mlp::from_layers(layers, output)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader::new(bytes);
        let net = Self::read_from(&mut r)?;
        if r.remaining() != 0 {
            return Err(NnError::Format(format!("{} trailing bytes", r.remaining())));
        }
        Ok(net)
    }
}

impl OptimizerState {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(OPT_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for v in [self.lr, self.beta1, self.beta2, self.eps] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        let mut sizes = vec![self.first.weights[0].nrows()];
        sizes.extend(self.first.weights.iter().map(|w| w.ncols()));
        put_sizes(&mut out, &sizes);
        put_arrays(&mut out, &self.first);
        put_arrays(&mut out, &self.second);
        out
    }

    pub fn read_from(reader: &mut Reader<'_>) -> Result<Self, NnError> {
        reader.magic(OPT_MAGIC)?;
        let lr = reader.f64()?;
        let beta1 = reader.f64()?;
        let beta2 = reader.f64()?;
        let eps = reader.f64()?;
        let step = reader.u64()?;
        let sizes = reader.sizes()?;
        let (w1, b1) = reader.arrays(&sizes)?;
        let (w2, b2) = reader.arrays(&sizes)?;
        Ok(Self {
            lr,
            beta1,
            beta2,
            eps,
            step,
            first: Gradients { weights: w1, biases: b1 },
            second: Gradients { weights: w2, biases: b2 },
        })
    }

    /// Whether the moment arrays fit `net`.
    pub fn fits(&self, net: &Mlp) -> bool {
        self.first.check_congruent(net).is_ok() && self.second.check_congruent(net).is_ok()
    }
}
