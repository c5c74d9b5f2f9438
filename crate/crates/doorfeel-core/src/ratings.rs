//! Adjective-pair vocabulary and user rating aggregation.
//!
//! Ten antonymous adjective pairs anchor the rating scales. Raw answers
//! come in on a 7-point Likert scale and are mapped affinely onto 0-100,
//! with 0 at the first (negative) pole and 100 at the second pole.

use crate::error::{CoreError, Result};
use crate::math;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub const NUM_PAIRS: usize = 10;

/// The ten pairs, fixed order. First label is the 0 pole, second the 100 pole.
pub const ADJECTIVE_PAIRS: [(&str, &str); NUM_PAIRS] = [
    ("Jerky", "Easy-to-operate"),
    ("Smooth", "Rough"),
    ("Frictional", "Frictionless"),
    ("Hard-to-pull", "Easy-to-open"),
    ("Balanced", "Unstable"),
    ("Soft", "Hard"),
    ("Cheap", "Classy"),
    ("Damped", "Recoiling"),
    ("Discordant", "Consistent"),
    ("Heavy", "Light"),
];

/// Averaged 0-100 ratings for one car, one value per adjective pair.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RatingVector {
    pub car_id: String,
    pub values: [f64; NUM_PAIRS],
}

impl RatingVector {
    pub fn new(car_id: String, values: [f64; NUM_PAIRS]) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !(0.0..=100.0).contains(v) {
                return Err(CoreError::Validation(format!(
                    "rating {v} for pair {i} outside [0, 100]"
                )));
            }
        }
        Ok(Self { car_id, values })
    }
}

/// One participant's raw 7-point answers for one car.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RawLikertSheet {
    pub car_id: String,
    pub participant_id: String,
    pub scores: [u8; NUM_PAIRS],
}

impl RawLikertSheet {
    pub fn new(car_id: String, participant_id: String, scores: [u8; NUM_PAIRS]) -> Result<Self> {
        for (i, s) in scores.iter().enumerate() {
            if !(1..=7).contains(s) {
                return Err(CoreError::Validation(format!(
                    "likert score {s} for pair {i} outside 1..=7"
                )));
            }
        }
        Ok(Self { car_id, participant_id, scores })
    }
}

/// Affine endpoint map: 1 -> 0, 7 -> 100.
pub fn likert_to_percent(score: u8) -> Result<f64> {
    if !(1..=7).contains(&score) {
        return Err(CoreError::Validation(format!(
            "likert score {score} outside 1..=7"
        )));
    }
    Ok((score - 1) as f64 * 100.0 / 6.0)
}

fn check_cohort(sheets: &[RawLikertSheet]) -> Result<&str> {
    let first = sheets
        .first()
        .ok_or_else(|| CoreError::Validation("no rating sheets".into()))?;
    for s in sheets {
        if s.car_id != first.car_id {
            return Err(CoreError::Validation(format!(
                "mixed car ids in cohort: {} vs {}",
                first.car_id, s.car_id
            )));
        }
    }
    Ok(&first.car_id)
}

/// Per-pair arithmetic mean of the mapped 0-100 ratings over participants.
pub fn average_ratings(sheets: &[RawLikertSheet]) -> Result<RatingVector> {
    let car_id = check_cohort(sheets)?;
    let mut values = [0.0; NUM_PAIRS];
    for s in sheets {
        for (v, &score) in values.iter_mut().zip(s.scores.iter()) {
            *v += likert_to_percent(score)?;
        }
    }
    for v in values.iter_mut() {
        *v /= sheets.len() as f64;
    }
    RatingVector::new(car_id.into(), values)
}

/// Per-pair population standard deviation of the mapped ratings.
pub fn rating_dispersion(sheets: &[RawLikertSheet]) -> Result<[f64; NUM_PAIRS]> {
    check_cohort(sheets)?;
    if sheets.len() < 2 {
        return Err(CoreError::Validation(
            "dispersion needs at least 2 sheets".into(),
        ));
    }
    let mean = average_ratings(sheets)?.values;
    let mut out = [0.0; NUM_PAIRS];
    for s in sheets {
        for ((o, m), &score) in out.iter_mut().zip(mean.iter()).zip(s.scores.iter()) {
            let d = likert_to_percent(score)? - m;
            *o += d * d;
        }
    }
    for o in out.iter_mut() {
        *o = math::sqrt(*o / sheets.len() as f64);
    }
    Ok(out)
}

/// Cohort mean/dispersion per car, preserving first-seen car order.
pub fn group_by_car(sheets: &[RawLikertSheet]) -> Vec<(String, Vec<RawLikertSheet>)> {
    let mut groups: Vec<(String, Vec<RawLikertSheet>)> = Vec::new();
    for s in sheets {
        match groups.iter_mut().find(|(id, _)| *id == s.car_id) {
            Some((_, g)) => g.push(s.clone()),
            None => groups.push((s.car_id.clone(), alloc::vec![s.clone()])),
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sheet(car: &str, p: &str, scores: [u8; 10]) -> RawLikertSheet {
        RawLikertSheet::new(car.into(), p.into(), scores).unwrap()
    }

    #[test]
    fn catalog_shape() {
        assert_eq!(ADJECTIVE_PAIRS.len(), 10);
        assert_eq!(ADJECTIVE_PAIRS[0], ("Jerky", "Easy-to-operate"));
        assert_eq!(ADJECTIVE_PAIRS[9], ("Heavy", "Light"));
    }

    #[test]
    fn likert_endpoints_and_midpoint() {
        assert_eq!(likert_to_percent(1).unwrap(), 0.0);
        assert_eq!(likert_to_percent(7).unwrap(), 100.0);
        assert_eq!(likert_to_percent(4).unwrap(), 50.0);
        assert!(likert_to_percent(0).is_err());
        assert!(likert_to_percent(8).is_err());
    }

    #[test]
    fn likert_image_is_the_seven_point_grid() {
        let expected = [0.0, 100.0 / 6.0, 200.0 / 6.0, 50.0, 400.0 / 6.0, 500.0 / 6.0, 100.0];
        for (s, e) in (1..=7u8).zip(expected) {
            assert!((likert_to_percent(s).unwrap() - e).abs() < 1e-9);
        }
    }

    #[test]
    fn average_single_sheet_of_fours() {
        let v = average_ratings(&[sheet("a", "p1", [4; 10])]).unwrap();
        assert_eq!(v.values, [50.0; 10]);
    }

    #[test]
    fn average_symmetric_extremes() {
        let v = average_ratings(&[sheet("a", "p1", [1; 10]), sheet("a", "p2", [7; 10])]).unwrap();
        assert_eq!(v.values, [50.0; 10]);
    }

    #[test]
    fn average_of_1_4_7_is_50() {
        let v = average_ratings(&[
            sheet("a", "p1", [1; 10]),
            sheet("a", "p2", [4; 10]),
            sheet("a", "p3", [7; 10]),
        ])
        .unwrap();
        assert!((v.values[0] - 50.0).abs() < 1e-9);
    }

    #[test]
    fn average_is_permutation_invariant() {
        let a = sheet("a", "p1", [1, 2, 3, 4, 5, 6, 7, 1, 2, 3]);
        let b = sheet("a", "p2", [7, 6, 5, 4, 3, 2, 1, 7, 6, 5]);
        let c = sheet("a", "p3", [2, 2, 2, 2, 2, 2, 2, 2, 2, 2]);
        let v1 = average_ratings(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let v2 = average_ratings(&[c, a, b]).unwrap();
        // summation order differs, so compare within float tolerance
        for (x, y) in v1.values.iter().zip(v2.values.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_cars_rejected() {
        let r = average_ratings(&[sheet("a", "p1", [4; 10]), sheet("b", "p2", [4; 10])]);
        assert!(r.is_err());
    }

    #[test]
    fn dispersion_identical_sheets_is_zero() {
        let d = rating_dispersion(&[sheet("a", "p1", [3; 10]), sheet("a", "p2", [3; 10])]).unwrap();
        assert_eq!(d, [0.0; 10]);
    }

    #[test]
    fn dispersion_two_point_extremes() {
        let d = rating_dispersion(&[sheet("a", "p1", [1; 10]), sheet("a", "p2", [7; 10])]).unwrap();
        for v in d {
            assert!((v - 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dispersion_matches_direct_formula() {
        let sheets = vec![
            sheet("a", "p1", [1, 2, 3, 4, 5, 6, 7, 1, 2, 3]),
            sheet("a", "p2", [4, 4, 4, 4, 4, 4, 4, 4, 4, 4]),
            sheet("a", "p3", [7, 1, 6, 2, 5, 3, 4, 7, 1, 6]),
        ];
        let d = rating_dispersion(&sheets).unwrap();
        for pair in 0..10 {
            let xs: Vec<f64> = sheets
                .iter()
                .map(|s| likert_to_percent(s.scores[pair]).unwrap())
                .collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
            assert!((d[pair] - var.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn dispersion_needs_two_sheets() {
        assert!(rating_dispersion(&[sheet("a", "p1", [4; 10])]).is_err());
    }
}
