//! Pin-grid geometry and the height field that every frame is rendered into.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Columns on the display.
pub const GRID_X: usize = 24;
/// Rows on the display.
pub const GRID_Y: usize = 24;
/// Total number of pins.
pub const PIN_COUNT: usize = GRID_X * GRID_Y;
/// Full pin stroke in logical units (1 unit = 1 mm).
pub const MAX_HEIGHT: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("pin coordinate ({x}, {y}) is outside the {GRID_X}x{GRID_Y} grid")]
    OutOfBounds { x: usize, y: usize },
    #[error("pin index {0} is outside 0..{PIN_COUNT}")]
    IndexOutOfBounds(usize),
    #[error("height field must have {PIN_COUNT} entries, got {0}")]
    WrongLength(usize),
    #[error("height {value} at pin {index} is outside 0..={MAX_HEIGHT}")]
    HeightOutOfRange { index: usize, value: f64 },
}

/// Row-major pin index: `x` is the column, `y` the row.
pub fn pin_index(x: usize, y: usize) -> Result<usize, GridError> {
    if x >= GRID_X || y >= GRID_Y {
        return Err(GridError::OutOfBounds { x, y });
    }
    Ok(y * GRID_X + x)
}

/// Inverse of [`pin_index`].
pub fn pin_coords(index: usize) -> Result<(usize, usize), GridError> {
    if index >= PIN_COUNT {
        return Err(GridError::IndexOutOfBounds(index));
    }
    Ok((index % GRID_X, index / GRID_X))
}

/// One frame of pin heights, row-major, each within `0..=MAX_HEIGHT`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HeightField {
    heights: Box<[f64; PIN_COUNT]>,
}

impl HeightField {
    pub fn zeros() -> Self {
        Self {
            heights: Box::new([0.0; PIN_COUNT]),
        }
    }

    /// Builds a field from raw values, rejecting out-of-range or non-finite heights.
    pub fn from_heights(values: &[f64]) -> Result<Self, GridError> {
        if values.len() != PIN_COUNT {
            return Err(GridError::WrongLength(values.len()));
        }
        let mut field = Self::zeros();
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=MAX_HEIGHT).contains(&value) {
                return Err(GridError::HeightOutOfRange { index, value });
            }
            field.heights[index] = value;
        }
        Ok(field)
    }

    /// Builds a field from arbitrary values, clamping each into range.
    /// NaN maps to 0.
    pub fn clamped(values: &[f64; PIN_COUNT]) -> Self {
        let mut field = Self::zeros();
        for (dst, &src) in field.heights.iter_mut().zip(values.iter()) {
            *dst = clamp_height(src);
        }
        field
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.heights.get(index).copied()
    }

    pub fn at(&self, x: usize, y: usize) -> Result<f64, GridError> {
        Ok(self.heights[pin_index(x, y)?])
    }

    /// Sets one pin, clamping into range.
    pub fn set(&mut self, index: usize, value: f64) -> Result<(), GridError> {
        let slot = self
            .heights
            .get_mut(index)
            .ok_or(GridError::IndexOutOfBounds(index))?;
        *slot = clamp_height(value);
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.heights[..]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.heights.iter().copied()
    }

    pub fn max(&self) -> f64 {
        self.iter().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.iter().fold(MAX_HEIGHT, f64::min)
    }
}

impl Default for HeightField {
    fn default() -> Self {
        Self::zeros()
    }
}

impl std::fmt::Debug for HeightField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let raised = self.iter().filter(|h| *h > 0.0).count();
        f.debug_struct("HeightField")
            .field("raised", &raised)
            .field("max", &self.max())
            .finish()
    }
}

impl TryFrom<Vec<f64>> for HeightField {
    type Error = GridError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        Self::from_heights(&value)
    }
}

impl From<HeightField> for Vec<f64> {
    fn from(value: HeightField) -> Self {
        value.heights.to_vec()
    }
}

pub(crate) fn clamp_height(value: f64) -> f64 {
    if value.is_nan() {
        0.0
    } else {
        value.clamp(0.0, MAX_HEIGHT)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pin_index_examples() {
        assert_eq!(pin_index(0, 0), Ok(0));
        assert_eq!(pin_index(23, 23), Ok(575));
        assert_eq!(pin_index(5, 2), Ok(53));
    }

    #[test]
    fn pin_index_rejects_out_of_range() {
        assert_eq!(pin_index(24, 0), Err(GridError::OutOfBounds { x: 24, y: 0 }));
        assert!(pin_index(0, 24).is_err());
    }

    #[test]
    fn pin_index_is_a_bijection() {
        let mut seen = vec![false; PIN_COUNT];
        for y in 0..GRID_Y {
            for x in 0..GRID_X {
                let i = pin_index(x, y).unwrap();
                assert!(!seen[i]);
                seen[i] = true;
                assert_eq!(pin_coords(i).unwrap(), (x, y));
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn from_heights_validates() {
        assert_eq!(
            HeightField::from_heights(&[0.0; 575]),
            Err(GridError::WrongLength(575))
        );
        let mut v = vec![0.0; PIN_COUNT];
        v[10] = 100.5;
        assert!(matches!(
            HeightField::from_heights(&v),
            Err(GridError::HeightOutOfRange { index: 10, .. })
        ));
    }

    proptest! {
        #[test]
        fn clamped_field_is_in_range(values in proptest::collection::vec(
            prop_oneof![any::<f64>(), -1e6..1e6f64], PIN_COUNT)) {
            let mut arr = [0.0; PIN_COUNT];
            arr.copy_from_slice(&values);
            let field = HeightField::clamped(&arr);
            prop_assert!(field.min() >= 0.0);
            prop_assert!(field.max() <= MAX_HEIGHT);
        }
    }
}
