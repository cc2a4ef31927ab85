//! Uniform quantizer with geometric interval refinement and a bit-exact message codec.
//!
//! A quantizer is described by a mid-value `z̄`, an interval length `l` and a bit
//! count `n`. The step is `Δ = l / 2ⁿ` and each component is rounded to
//! `z̄ + jΔ` with `j = sgn(z − z̄)·⌊|z − z̄|/Δ + ½⌋`. Values outside
//! `[z̄ − l/2, z̄ + l/2]` are clamped to the nearest endpoint and flagged.
//!
//! The closed interval holds `2ⁿ + 1` lattice points while an `n`-bit word
//! holds `2ⁿ`. The wire code is offset binary over `j ∈ [−2ⁿ⁻¹, 2ⁿ⁻¹ − 1]`,
//! so the upper endpoint is not transmittable. [`QuantizerState::quantize_codable`]
//! folds that endpoint onto its lower neighbour and flags it as saturated.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mid-value, interval length and bit count of one quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerState<T> {
    mid: Vec<T>,
    interval: T,
    bits: u32,
}

/// Output of a vector quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized<T> {
    pub values: Vec<T>,
    /// Signed lattice offsets `j` with `value = z̄ + jΔ`.
    pub offsets: Vec<i64>,
    pub saturated: Vec<bool>,
}

impl<T> Quantized<T> {
    pub fn saturation_count(&self) -> usize {
        self.saturated.iter().filter(|&&s| s).count()
    }
}

/// Largest admissible bit count for the scalar type.
pub fn max_bits<T: Scalar>() -> u32 {
    T::MANTISSA_BITS.min(62)
}

/// `2ⁿ` as a scalar (exact).
pub fn pow2<T: Scalar>(n: u32) -> T {
    T::lit(2f64.powi(n as i32))
}

/// Scalar quantizer. Returns the signed lattice offset and whether the input was clamped.
pub fn quantize_scalar<T: Scalar>(z: T, mid: T, step: T, half_levels: i64) -> (i64, bool) {
    let diff = z - mid;
    let mag = diff.abs();
    let limit = step * T::int(half_levels);
    if mag > limit {
        let j = if diff > T::zero() { half_levels } else { -half_levels };
        return (j, true);
    }
    let m = (mag / step + T::lit(0.5)).floor();
    let m = m.to_i64().unwrap_or(half_levels).min(half_levels);
    let j = if diff > T::zero() {
        m
    } else if diff < T::zero() {
        -m
    } else {
        0
    };
    (j, false)
}

impl<T: Scalar> QuantizerState<T> {
    pub fn new(mid: Vec<T>, interval: T, bits: u32) -> Result<Self> {
        if !(interval > T::zero()) || !interval.is_finite() {
            return Err(Error::InvalidParameter(format!("interval length must be positive, got {interval}")));
        }
        if bits == 0 || bits > max_bits::<T>() {
            return Err(Error::InvalidParameter(format!(
                "bit count must lie in 1..={}, got {bits}",
                max_bits::<T>()
            )));
        }
        if mid.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { mid, interval, bits })
    }

    pub fn mid(&self) -> &[T] {
        &self.mid
    }

    pub fn interval(&self) -> T {
        self.interval
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn dim(&self) -> usize {
        self.mid.len()
    }

    /// `Δ = l / 2ⁿ`.
    pub fn step(&self) -> T {
        self.interval / pow2::<T>(self.bits)
    }

    fn half_levels(&self) -> i64 {
        1i64 << (self.bits - 1)
    }

    /// Value of lattice offset `j` in component `idx`.
    pub fn lattice_value(&self, idx: usize, j: i64) -> T {
        self.mid[idx] + T::int(j) * self.step()
    }

    fn check_input(&self, value: &[T]) -> Result<()> {
        if value.len() != self.mid.len() {
            return Err(Error::DimensionMismatch(format!(
                "quantizer holds {} components, got {}",
                self.mid.len(),
                value.len()
            )));
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    /// Componentwise rounding onto the closed interval's `2ⁿ + 1` lattice points.
    pub fn quantize(&self, value: &[T]) -> Result<Quantized<T>> {
        self.check_input(value)?;
        let step = self.step();
        let half = self.half_levels();
        let mut out = Quantized {
            values: Vec::with_capacity(value.len()),
            offsets: Vec::with_capacity(value.len()),
            saturated: Vec::with_capacity(value.len()),
        };
        for (i, &z) in value.iter().enumerate() {
            let (j, sat) = quantize_scalar(z, self.mid[i], step, half);
            out.values.push(self.lattice_value(i, j));
            out.offsets.push(j);
            out.saturated.push(sat);
        }
        Ok(out)
    }

    /// Like [`quantize`](Self::quantize) but restricted to the `2ⁿ` transmittable points.
    pub fn quantize_codable(&self, value: &[T]) -> Result<Quantized<T>> {
        let mut q = self.quantize(value)?;
        let top = self.half_levels() - 1;
        for i in 0..q.offsets.len() {
            if q.offsets[i] > top {
                q.offsets[i] = top;
                q.values[i] = self.lattice_value(i, top);
                q.saturated[i] = true;
            }
        }
        Ok(q)
    }

    /// Same bit count and interval, new mid-value.
    pub fn advance_midpoint(&self, last_quantized: Vec<T>) -> Result<Self> {
        if last_quantized.len() != self.mid.len() {
            return Err(Error::DimensionMismatch("mid-value length changed".into()));
        }
        Self::new(last_quantized, self.interval, self.bits)
    }

    /// Same mid-value and bit count, new interval length.
    pub fn with_interval(&self, interval: T) -> Result<Self> {
        Self::new(self.mid.clone(), interval, self.bits)
    }

    /// Encode values that already lie on the transmittable lattice.
    pub fn encode(&self, values: &[T], sender: usize, channel: Channel, iteration: usize) -> Result<QuantizedMessage> {
        self.check_input(values)?;
        let step = self.step();
        let half = self.half_levels();
        let mut indices = Vec::with_capacity(values.len());
        for (i, &v) in values.iter().enumerate() {
            let jf = ((v - self.mid[i]) / step).round();
            let j = jf.to_i64().ok_or(Error::LatticeMismatch)?;
            if j < -half || j > half - 1 || self.lattice_value(i, j) != v {
                return Err(Error::LatticeMismatch);
            }
            indices.push((j + half) as u64);
        }
        Ok(QuantizedMessage {
            sender,
            channel,
            iteration,
            payload: Payload::Lattice { bits: self.bits, indices },
            saturation: vec![false; values.len()],
        })
    }

    /// Quantize onto the transmittable lattice and encode in one go.
    pub fn encode_quantized(
        &self,
        value: &[T],
        sender: usize,
        channel: Channel,
        iteration: usize,
    ) -> Result<(QuantizedMessage, Quantized<T>)> {
        let q = self.quantize_codable(value)?;
        let half = self.half_levels();
        let indices = q.offsets.iter().map(|&j| (j + half) as u64).collect();
        let msg = QuantizedMessage {
            sender,
            channel,
            iteration,
            payload: Payload::Lattice { bits: self.bits, indices },
            saturation: q.saturated.clone(),
        };
        Ok((msg, q))
    }

    /// Reconstruct the transmitted values.
    pub fn decode(&self, msg: &QuantizedMessage) -> Result<Vec<T>> {
        match &msg.payload {
            Payload::Lattice { bits, indices } => {
                if *bits != self.bits {
                    return Err(Error::StateMismatch(format!("message uses {bits} bits, decoder {}", self.bits)));
                }
                if indices.len() != self.mid.len() {
                    return Err(Error::StateMismatch(format!(
                        "message carries {} scalars, decoder expects {}",
                        indices.len(),
                        self.mid.len()
                    )));
                }
                let half = self.half_levels();
                let limit = 1u64 << self.bits;
                indices
                    .iter()
                    .enumerate()
                    .map(|(i, &u)| {
                        if u >= limit {
                            return Err(Error::MalformedMessage(format!("index {u} needs more than {} bits", self.bits)));
                        }
                        Ok(self.lattice_value(i, u as i64 - half))
                    })
                    .collect()
            }
            Payload::Full(_) => Err(Error::StateMismatch("full-precision payload sent to a lattice decoder".into())),
        }
    }
}

/// Interval schedule `l_k = C·κᵏ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementSchedule<T> {
    pub initial: T,
    pub shrinkage: T,
}

impl<T: Scalar> RefinementSchedule<T> {
    pub fn new(initial: T, shrinkage: T) -> Result<Self> {
        if !(initial > T::zero()) {
            return Err(Error::InvalidParameter("initial interval must be positive".into()));
        }
        if !(shrinkage > T::zero() && shrinkage < T::one()) {
            return Err(Error::InvalidParameter("shrinkage must lie in (0, 1)".into()));
        }
        Ok(Self { initial, shrinkage })
    }

    pub fn interval(&self, k: usize) -> T {
        self.initial * self.shrinkage.powi(k as i32)
    }
}

/// Which of the two per-agent streams a message belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Variable,
    Gradient,
}

/// Message body.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Offset-binary lattice indices, `bits` wide each.
    Lattice { bits: u32, indices: Vec<u64> },
    /// Full-precision values (pass-through mode, no bit accounting).
    Full(Vec<f64>),
}

/// One broadcast from an agent to its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMessage {
    pub sender: usize,
    pub channel: Channel,
    pub iteration: usize,
    pub payload: Payload,
    /// Sender-side diagnostics, not part of the wire image.
    pub saturation: Vec<bool>,
}

const HEADER_BITS: usize = 32;

impl QuantizedMessage {
    /// Full-precision message for pass-through mode.
    pub fn full(sender: usize, channel: Channel, iteration: usize, values: Vec<f64>) -> Self {
        let n = values.len();
        Self { sender, channel, iteration, payload: Payload::Full(values), saturation: vec![false; n] }
    }

    pub fn len(&self) -> usize {
        match &self.payload {
            Payload::Lattice { indices, .. } => indices.len(),
            Payload::Full(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Payload bits; zero for full-precision messages.
    pub fn payload_bits(&self) -> u64 {
        match &self.payload {
            Payload::Lattice { bits, indices } => *bits as u64 * indices.len() as u64,
            Payload::Full(_) => 0,
        }
    }

    pub fn saturation_count(&self) -> usize {
        self.saturation.iter().filter(|&&s| s).count()
    }

    /// Values carried by a full-precision message.
    pub fn full_values(&self) -> Result<&[f64]> {
        match &self.payload {
            Payload::Full(v) => Ok(v),
            Payload::Lattice { .. } => Err(Error::StateMismatch("lattice payload sent to a full-precision reader".into())),
        }
    }

    /// Wire image: 16-bit sender, 1-bit channel, 15-bit iteration, then the
    /// indices packed most-significant bit first, zero-padded to a byte boundary.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (bits, indices) = match &self.payload {
            Payload::Lattice { bits, indices } => (*bits, indices),
            Payload::Full(_) => {
                return Err(Error::MalformedMessage("full-precision payloads have no wire image".into()))
            }
        };
        if self.sender > u16::MAX as usize {
            return Err(Error::MalformedMessage(format!("sender id {} exceeds 16 bits", self.sender)));
        }
        if self.iteration >= 1 << 15 {
            return Err(Error::MalformedMessage(format!("iteration {} exceeds 15 bits", self.iteration)));
        }
        let mut w = BitWriter::default();
        w.push(self.sender as u64, 16);
        w.push(matches!(self.channel, Channel::Gradient) as u64, 1);
        w.push(self.iteration as u64, 15);
        for &u in indices {
            if bits < 64 && u >> bits != 0 {
                return Err(Error::MalformedMessage(format!("index {u} needs more than {bits} bits")));
            }
            w.push(u, bits as usize);
        }
        Ok(w.finish())
    }

    /// Parse a wire image; `bits` and `count` come from the receiver's quantizer state.
    pub fn from_bytes(bytes: &[u8], bits: u32, count: usize) -> Result<Self> {
        let needed = (HEADER_BITS + bits as usize * count).div_ceil(8);
        if bytes.len() != needed {
            return Err(Error::MalformedMessage(format!("expected {needed} bytes, got {}", bytes.len())));
        }
        let mut r = BitReader { bytes, at: 0 };
        let sender = r.take(16) as usize;
        let channel = if r.take(1) == 1 { Channel::Gradient } else { Channel::Variable };
        let iteration = r.take(15) as usize;
        let indices = (0..count).map(|_| r.take(bits as usize)).collect();
        Ok(Self {
            sender,
            channel,
            iteration,
            payload: Payload::Lattice { bits, indices },
            saturation: vec![false; count],
        })
    }
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    used: usize,
}

impl BitWriter {
    fn push(&mut self, value: u64, width: usize) {
        for b in (0..width).rev() {
            if self.used.is_multiple_of(8) {
                self.bytes.push(0);
            }
            let bit = ((value >> b) & 1) as u8;
            let last = self.bytes.len() - 1;
            self.bytes[last] |= bit << (7 - self.used % 8);
            self.used += 1;
        }
    }

    fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl BitReader<'_> {
    fn take(&mut self, width: usize) -> u64 {
        let mut v = 0u64;
        for _ in 0..width {
            let bit = (self.bytes[self.at / 8] >> (7 - self.at % 8)) & 1;
            v = (v << 1) | bit as u64;
            self.at += 1;
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_offset_is_exact() {
        let q = QuantizerState::new(vec![0.7f64], 2.0, 3).unwrap();
        let out = q.quantize(&[0.7]).unwrap();
        assert_eq!(out.values, vec![0.7]);
        assert!(!out.saturated[0]);
    }

    #[test]
    fn hand_evaluated_cases() {
        let q = QuantizerState::new(vec![0.0f64], 1.0, 2).unwrap();
        assert_eq!(q.step(), 0.25);
        let out = q.quantize(&[0.3]).unwrap();
        assert_eq!(out.values[0], 0.25);
        assert!((0.3f64 - 0.25).abs() <= 0.125);
        let out = q.quantize(&[0.9]).unwrap();
        assert_eq!(out.values[0], 0.5);
        assert!(out.saturated[0]);
        let out = q.quantize(&[-0.9]).unwrap();
        assert_eq!(out.values[0], -0.5);
        assert!(out.saturated[0]);
    }

    #[test]
    fn half_step_rounds_up_in_magnitude() {
        let q = QuantizerState::new(vec![0.0f64], 1.0, 2).unwrap();
        assert_eq!(q.quantize(&[0.125]).unwrap().values[0], 0.25);
        assert_eq!(q.quantize(&[-0.125]).unwrap().values[0], -0.25);
    }

    #[test]
    fn rejects_non_finite() {
        let q = QuantizerState::new(vec![0.0f64, 0.0], 1.0, 2).unwrap();
        assert!(matches!(q.quantize(&[f64::NAN, 0.0]), Err(Error::NonFiniteInput)));
        assert!(matches!(q.quantize(&[0.0, f64::INFINITY]), Err(Error::NonFiniteInput)));
    }

    #[test]
    fn codec_small_case() {
        let q = QuantizerState::new(vec![0.0f64], 1.0, 2).unwrap();
        let msg = q.encode(&[0.25], 3, Channel::Variable, 0).unwrap();
        assert_eq!(msg.payload_bits(), 2);
        assert_eq!(msg.payload, Payload::Lattice { bits: 2, indices: vec![3] });
        assert_eq!(q.decode(&msg).unwrap(), vec![0.25]);
        assert!(matches!(q.encode(&[0.5], 3, Channel::Variable, 0), Err(Error::LatticeMismatch)));
        assert!(matches!(q.encode(&[0.3], 3, Channel::Variable, 0), Err(Error::LatticeMismatch)));
    }

    #[test]
    fn codable_folds_upper_endpoint() {
        let q = QuantizerState::new(vec![0.0f64], 1.0, 2).unwrap();
        let (msg, out) = q.encode_quantized(&[0.49], 0, Channel::Gradient, 1).unwrap();
        assert_eq!(out.values[0], 0.25);
        assert!(out.saturated[0]);
        assert_eq!(q.decode(&msg).unwrap(), vec![0.25]);
    }

    #[test]
    fn payload_size() {
        let q = QuantizerState::new(vec![0.0f64; 12], 4.0, 11).unwrap();
        let (msg, _) = q.encode_quantized(&[0.1; 12], 1, Channel::Variable, 2).unwrap();
        assert_eq!(msg.payload_bits(), 132);
        let bytes = msg.to_bytes().unwrap();
        assert_eq!(bytes.len(), (32 + 132usize).div_ceil(8));
        let back = QuantizedMessage::from_bytes(&bytes, 11, 12).unwrap();
        assert_eq!(back.payload, msg.payload);
        assert_eq!(back.sender, 1);
        assert_eq!(back.iteration, 2);
        assert_eq!(back.channel, Channel::Variable);
    }

    #[test]
    fn state_mismatch_detected() {
        let q = QuantizerState::new(vec![0.0f64; 2], 1.0, 3).unwrap();
        let (msg, _) = q.encode_quantized(&[0.1, 0.2], 0, Channel::Variable, 0).unwrap();
        let other = QuantizerState::new(vec![0.0f64; 2], 1.0, 4).unwrap();
        assert!(matches!(other.decode(&msg), Err(Error::StateMismatch(_))));
        let shorter = QuantizerState::new(vec![0.0f64; 3], 1.0, 3).unwrap();
        assert!(matches!(shorter.decode(&msg), Err(Error::StateMismatch(_))));
    }

    #[test]
    fn schedule_values() {
        let s = RefinementSchedule::new(65.85f64, 0.51).unwrap();
        assert_eq!(s.interval(0), 65.85);
        assert!((s.interval(5) - 65.85 * 0.51f64.powi(5)).abs() < 1e-12);
        assert!((s.interval(5) - 2.272).abs() < 1e-3);
        for k in 0..20 {
            assert!(s.interval(k + 1) < s.interval(k));
        }
    }

    #[test]
    fn mid_value_chaining() {
        let s = RefinementSchedule::new(2.0f64, 0.5).unwrap();
        let mut q = QuantizerState::new(vec![0.0f64], s.interval(0), 4).unwrap();
        let target = 0.3137;
        let mut last = 0.0;
        for k in 0..6 {
            q = q.with_interval(s.interval(k)).unwrap();
            let out = q.quantize(&[target]).unwrap();
            assert_eq!(q.mid()[0], last);
            last = out.values[0];
            q = q.advance_midpoint(out.values.clone()).unwrap();
        }
        assert!((last - target).abs() <= s.interval(5) / 32.0);
    }

    #[test]
    fn works_in_single_precision() {
        let q = QuantizerState::new(vec![0.0f32], 1.0, 2).unwrap();
        assert_eq!(q.quantize(&[0.3f32]).unwrap().values[0], 0.25);
    }
}
