//! Hardware link protocol: the 576-byte wire frame, press detection from
//! actual heights and a one-slot latest-wins outbox.
//!
//! The MQTT transport itself lives in the binary; everything here is pure.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use thiserror::Error;

use crate::grid::{HeightField, MAX_HEIGHT, PIN_COUNT};

/// Actual height this far below the target counts as a press.
pub const PRESS_THRESHOLD: f64 = 10.0;
pub const DEFAULT_TARGET_TOPIC: &str = "shapeit/pins/target";
pub const DEFAULT_ACTUAL_TOPIC: &str = "shapeit/pins/actual";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("wire frame must be {PIN_COUNT} bytes, got {0}")]
    BadLength(usize),
    #[error("pin {index} has byte {value}, above {MAX_HEIGHT}")]
    OutOfRange { index: usize, value: u8 },
}

/// One unsigned byte per pin, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct WireFrame(Box<[u8; PIN_COUNT]>);

impl std::fmt::Debug for WireFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "WireFrame({} bytes, max {})", PIN_COUNT, self.0.iter().max().unwrap_or(&0))
    }
}

/// Round half up, after clamping to the stroke.
pub fn quantize(height: f64) -> u8 {
    let h = if height.is_nan() { 0.0 } else { height.clamp(0.0, MAX_HEIGHT) };
    (h + 0.5).floor() as u8
}

impl WireFrame {
    pub fn encode(field: &HeightField) -> Self {
        let mut bytes = Box::new([0u8; PIN_COUNT]);
        for (b, h) in bytes.iter_mut().zip(field.iter()) {
            *b = quantize(h);
        }
        Self(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let array: [u8; PIN_COUNT] = bytes.try_into().map_err(|_| WireError::BadLength(bytes.len()))?;
        if let Some((index, &value)) = array.iter().enumerate().find(|(_, v)| f64::from(**v) > MAX_HEIGHT) {
            return Err(WireError::OutOfRange { index, value });
        }
        Ok(Self(Box::new(array)))
    }

    pub fn decode(&self) -> HeightField {
        let heights: Vec<f64> = self.0.iter().map(|b| f64::from(*b)).collect();
        HeightField::from_heights(&heights).expect("wire bytes are within the stroke")
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0[..]
    }

    pub fn get(&self, index: usize) -> Option<u8> {
        self.0.get(index).copied()
    }
}

/// Hysteresis-free press rule.
pub fn is_pressed(target: f64, actual: f64, threshold: f64) -> bool {
    actual < target - threshold
}

/// Press state for every button pin given its rendered target.
pub fn detect_presses(
    targets: &[(usize, f64)],
    actual: &WireFrame,
    threshold: f64,
) -> Vec<(usize, bool)> {
    targets
        .iter()
        .filter_map(|&(index, target)| {
            actual
                .get(index)
                .map(|a| (index, is_pressed(target, f64::from(a), threshold)))
        })
        .collect()
}

/// Holds at most one pending frame; a newer frame replaces an unsent one.
#[derive(Debug)]
pub struct LatestSlot<T> {
    slot: Mutex<(Option<T>, bool)>,
    ready: Condvar,
}

impl<T> Default for LatestSlot<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> LatestSlot<T> {
    pub fn new() -> Self {
        Self {
            slot: Mutex::new((None, false)),
            ready: Condvar::new(),
        }
    }

    /// Stores `value`, returning the frame it displaced, if any.
    pub fn put(&self, value: T) -> Option<T> {
        let mut guard = self.slot.lock().unwrap_or_else(|e| e.into_inner());
        let old = guard.0.replace(value);
        self.ready.notify_one();
        old
    }

    pub fn take(&self) -> Option<T> {
        self.slot.lock().unwrap_or_else(|e| e.into_inner()).0.take()
    }

    /// Waits up to `timeout` for a frame. Returns `None` on timeout or close.
    pub fn wait(&self, timeout: Duration) -> Option<T> {
        let guard = self.slot.lock().unwrap_or_else(|e| e.into_inner());
        let (mut guard, _) = self
            .ready
            .wait_timeout_while(guard, timeout, |(v, closed)| v.is_none() && !*closed)
            .unwrap_or_else(|e| e.into_inner());
        guard.0.take()
    }

    pub fn close(&self) {
        self.slot.lock().unwrap_or_else(|e| e.into_inner()).1 = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.slot.lock().unwrap_or_else(|e| e.into_inner()).1
    }
}

/// Exponential reconnect delay: `base * 2^attempt`, capped at `max`.
pub fn backoff(attempt: u32, base: Duration, max: Duration) -> Duration {
    base.saturating_mul(1u32.checked_shl(attempt.min(16)).unwrap_or(u32::MAX)).min(max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_field_is_zero_bytes() {
        let frame = WireFrame::encode(&HeightField::zeros());
        assert_eq!(frame.as_bytes(), &[0u8; PIN_COUNT][..]);
    }

    #[test]
    fn round_half_up() {
        assert_eq!(quantize(25.4), 25);
        assert_eq!(quantize(25.5), 26);
        assert_eq!(quantize(0.49), 0);
        assert_eq!(quantize(99.5), 100);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(f64::NAN), 0);
    }

    #[test]
    fn press_rule() {
        assert!(!is_pressed(50.0, 50.0, PRESS_THRESHOLD));
        assert!(is_pressed(50.0, 35.0, PRESS_THRESHOLD));
        assert!(!is_pressed(50.0, 40.0, PRESS_THRESHOLD));
    }

    #[test]
    fn bad_frames() {
        assert_eq!(WireFrame::from_bytes(&[0; 575]).unwrap_err(), WireError::BadLength(575));
        let mut bytes = [0u8; PIN_COUNT];
        bytes[7] = 101;
        assert_eq!(
            WireFrame::from_bytes(&bytes).unwrap_err(),
            WireError::OutOfRange { index: 7, value: 101 }
        );
    }

    #[test]
    fn latest_wins() {
        let slot = LatestSlot::new();
        assert_eq!(slot.put(1), None);
        assert_eq!(slot.put(2), Some(1));
        assert_eq!(slot.wait(Duration::from_millis(1)), Some(2));
        assert_eq!(slot.wait(Duration::from_millis(1)), None);
        slot.close();
        assert!(slot.is_closed());
    }

    #[test]
    fn backoff_grows_and_caps() {
        let base = Duration::from_millis(100);
        let max = Duration::from_secs(5);
        assert_eq!(backoff(0, base, max), base);
        assert_eq!(backoff(3, base, max), Duration::from_millis(800));
        assert_eq!(backoff(40, base, max), max);
    }

    proptest! {
        #[test]
        fn round_trip_within_half_unit(heights in proptest::collection::vec(0.0f64..=100.0, PIN_COUNT)) {
            let field = HeightField::from_heights(&heights).unwrap();
            let frame = WireFrame::encode(&field);
            let back = frame.decode();
            for (a, b) in field.iter().zip(back.iter()) {
                prop_assert!((a - b).abs() <= 0.5);
            }
            prop_assert_eq!(WireFrame::encode(&back), frame.clone());
            prop_assert_eq!(WireFrame::from_bytes(frame.as_bytes()).unwrap(), frame);
        }
    }
}
