//! Observable sets and the schedules that produce them.
//!
//! A set is only ever queried through [`ObservableSet::contains`]. All
//! inequalities are closed. Every descriptor carries its ambient dimension,
//! which is validated when the set is built or deserialized.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// `{x : normal . x >= offset}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let h = HalfSpace { normal, offset };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        if self.normal.is_empty() {
            return Err(Error::InvalidSet("half-space normal is empty".into()));
        }
        if self.normal.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSet("half-space normal must be finite".into()));
        }
        if self.normal.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidSet("half-space normal must be nonzero".into()));
        }
        if self.offset.is_nan() {
            return Err(Error::InvalidSet("half-space offset is NaN".into()));
        }
        Ok(())
    }

    #[inline]
    fn holds(&self, x: &[f64]) -> bool {
        let dot: f64 = self.normal.iter().zip(x).map(|(a, b)| a * b).sum();
        dot >= self.offset
    }
}

/// A censoring region, accessed through a membership oracle.
///
/// Serialized as a tagged record, e.g.
/// `{ type = "halfspace", normal = [1.0, 0.0], offset = 0.5 }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", try_from = "SetRepr")]
pub enum ObservableSet {
    FullSpace {
        dim: usize,
    },
    EmptySet {
        dim: usize,
    },
    #[serde(rename = "halfspace")]
    HalfSpace(HalfSpace),
    /// `lower <= x <= upper` componentwise; bounds may be infinite.
    AxisBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    #[serde(rename = "union_of_halfspaces")]
    UnionOfHalfSpaces {
        members: Vec<HalfSpace>,
    },
    Intersection {
        members: Vec<ObservableSet>,
    },
    /// `x[axis] <= 0 or x[axis] >= gap`. `axis` is zero-based.
    TwoSlab {
        dim: usize,
        axis: usize,
        gap: f64,
    },
}

// Mirror used only for deserialization so that every decoded set passes
// the same validation as the constructors.
#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum SetRepr {
    FullSpace {
        dim: usize,
    },
    EmptySet {
        dim: usize,
    },
    #[serde(rename = "halfspace")]
    HalfSpace(HalfSpace),
    AxisBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    #[serde(rename = "union_of_halfspaces")]
    UnionOfHalfSpaces {
        members: Vec<HalfSpace>,
    },
    Intersection {
        members: Vec<ObservableSet>,
    },
    TwoSlab {
        dim: usize,
        axis: usize,
        gap: Option<f64>,
    },
}

impl TryFrom<SetRepr> for ObservableSet {
    type Error = Error;

    fn try_from(repr: SetRepr) -> Result<Self> {
        match repr {
            SetRepr::FullSpace { dim } => ObservableSet::full_space(dim),
            SetRepr::EmptySet { dim } => ObservableSet::empty(dim),
            SetRepr::HalfSpace(h) => ObservableSet::half_space(h.normal, h.offset),
            SetRepr::AxisBox { lower, upper } => ObservableSet::axis_box(lower, upper),
            SetRepr::UnionOfHalfSpaces { members } => ObservableSet::union_of_half_spaces(members),
            SetRepr::Intersection { members } => ObservableSet::intersection(members),
            SetRepr::TwoSlab { dim, axis, gap } => match gap {
                Some(gap) => ObservableSet::two_slab(dim, axis, gap),
                None => ObservableSet::two_slab_default(dim, axis),
            },
        }
    }
}

impl ObservableSet {
    pub fn full_space(dim: usize) -> Result<Self> {
        positive_dim(dim)?;
        Ok(ObservableSet::FullSpace { dim })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        positive_dim(dim)?;
        Ok(ObservableSet::EmptySet { dim })
    }

    pub fn half_space(normal: Vec<f64>, offset: f64) -> Result<Self> {
        Ok(ObservableSet::HalfSpace(HalfSpace::new(normal, offset)?))
    }

    pub fn axis_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        positive_dim(lower.len())?;
        check_dim(lower.len(), upper.len())?;
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidSet(format!(
                    "axis box bounds invalid at coordinate {i}: [{lo}, {hi}]"
                )));
            }
        }
        Ok(ObservableSet::AxisBox { lower, upper })
    }

    pub fn union_of_half_spaces(members: Vec<HalfSpace>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidSet("union needs at least one half-space".into()))?;
        let dim = first.normal.len();
        for h in &members {
            h.validate()?;
            check_dim(dim, h.normal.len())?;
        }
        Ok(ObservableSet::UnionOfHalfSpaces { members })
    }

    pub fn intersection(members: Vec<ObservableSet>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidSet("intersection needs at least one member".into()))?;
        let dim = first.dim();
        for m in &members {
            check_dim(dim, m.dim())?;
        }
        Ok(ObservableSet::Intersection { members })
    }

    pub fn two_slab(dim: usize, axis: usize, gap: f64) -> Result<Self> {
        positive_dim(dim)?;
        if axis >= dim {
            return Err(Error::InvalidSet(format!(
                "two-slab axis {axis} out of range for dimension {dim}"
            )));
        }
        if !gap.is_finite() || gap < 0.0 {
            return Err(Error::InvalidSet(format!("two-slab gap must be finite and >= 0, got {gap}")));
        }
        Ok(ObservableSet::TwoSlab { dim, axis, gap })
    }

    /// Two-slab with gap `sqrt(dim)`.
    pub fn two_slab_default(dim: usize, axis: usize) -> Result<Self> {
        Self::two_slab(dim, axis, (dim as f64).sqrt())
    }

    pub fn dim(&self) -> usize {
        match self {
            ObservableSet::FullSpace { dim }
            | ObservableSet::EmptySet { dim }
            | ObservableSet::TwoSlab { dim, .. } => *dim,
            ObservableSet::HalfSpace(h) => h.normal.len(),
            ObservableSet::AxisBox { lower, .. } => lower.len(),
            ObservableSet::UnionOfHalfSpaces { members } => members[0].normal.len(),
            ObservableSet::Intersection { members } => members[0].dim(),
        }
    }

    /// Membership test. Errors only on a dimension mismatch.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        check_dim(self.dim(), x.len())?;
        Ok(self.contains_unchecked(x))
    }

    /// Membership without the dimension check; `x` must have length `dim()`.
    #[inline]
    pub fn contains_unchecked(&self, x: &[f64]) -> bool {
        match self {
            ObservableSet::FullSpace { .. } => true,
            ObservableSet::EmptySet { .. } => false,
            ObservableSet::HalfSpace(h) => h.holds(x),
            ObservableSet::AxisBox { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi),
            ObservableSet::UnionOfHalfSpaces { members } => members.iter().any(|h| h.holds(x)),
            ObservableSet::Intersection { members } => {
                members.iter().all(|m| m.contains_unchecked(x))
            }
            ObservableSet::TwoSlab { axis, gap, .. } => x[*axis] <= 0.0 || x[*axis] >= *gap,
        }
    }

    /// Short human-readable tag, used in summaries.
    pub fn kind(&self) -> &'static str {
        match self {
            ObservableSet::FullSpace { .. } => "full_space",
            ObservableSet::EmptySet { .. } => "empty_set",
            ObservableSet::HalfSpace(_) => "halfspace",
            ObservableSet::AxisBox { .. } => "axis_box",
            ObservableSet::UnionOfHalfSpaces { .. } => "union_of_halfspaces",
            ObservableSet::Intersection { .. } => "intersection",
            ObservableSet::TwoSlab { .. } => "two_slab",
        }
    }
}

fn positive_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::InvalidSet("ambient dimension must be positive".into()))
    } else {
        Ok(())
    }
}

/// Rule signature for user-supplied schedules: `(t, x_t) -> S_{t+1}`.
pub type ScheduleFn = dyn Fn(usize, &[f64]) -> ObservableSet + Send + Sync;

/// Produces `S_{t+1}` from `(t, x_t)`.
///
/// The rule never sees `x_{t+1}` or the noise that produces it, so the next
/// state and the next set are conditionally independent given `x_t`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", try_from = "ScheduleRepr")]
pub enum SetSchedule {
    Static {
        set: ObservableSet,
    },
    /// `S_{t+1} = {y : y_i >= x_t[perm[i]] + offsets[i]}`.
    Chasing {
        offsets: Vec<f64>,
        permutation: Vec<usize>,
        initial: ObservableSet,
    },
    #[serde(skip)]
    Custom {
        dim: usize,
        initial: ObservableSet,
        rule: Arc<ScheduleFn>,
    },
}

// Deserialization mirror: chasing schedules may omit the permutation
// (cyclic by default) and the initial set, and are validated on decode.
#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum ScheduleRepr {
    Static {
        set: ObservableSet,
    },
    Chasing {
        offsets: Vec<f64>,
        permutation: Option<Vec<usize>>,
        initial: Option<ObservableSet>,
    },
}

impl TryFrom<ScheduleRepr> for SetSchedule {
    type Error = Error;

    fn try_from(repr: ScheduleRepr) -> Result<Self> {
        match repr {
            ScheduleRepr::Static { set } => Ok(make_static_schedule(set)),
            ScheduleRepr::Chasing {
                offsets,
                permutation,
                initial,
            } => {
                let mut sched = match permutation {
                    Some(p) => make_chasing_schedule_with(offsets, p)?,
                    None => make_chasing_schedule(offsets)?,
                };
                if let (Some(set), SetSchedule::Chasing { offsets, initial: slot, .. }) =
                    (initial, &mut sched)
                {
                    check_dim(offsets.len(), set.dim())?;
                    *slot = set;
                }
                Ok(sched)
            }
        }
    }
}

impl fmt::Debug for SetSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetSchedule::Static { set } => f.debug_struct("Static").field("set", set).finish(),
            SetSchedule::Chasing {
                offsets,
                permutation,
                initial,
            } => f
                .debug_struct("Chasing")
                .field("offsets", offsets)
                .field("permutation", permutation)
                .field("initial", initial)
                .finish(),
            SetSchedule::Custom { dim, initial, .. } => f
                .debug_struct("Custom")
                .field("dim", dim)
                .field("initial", initial)
                .finish_non_exhaustive(),
        }
    }
}

// Custom rules compare by identity.
impl PartialEq for SetSchedule {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (SetSchedule::Static { set: a }, SetSchedule::Static { set: b }) => a == b,
            (
                SetSchedule::Chasing {
                    offsets: o1,
                    permutation: p1,
                    initial: i1,
                },
                SetSchedule::Chasing {
                    offsets: o2,
                    permutation: p2,
                    initial: i2,
                },
            ) => o1 == o2 && p1 == p2 && i1 == i2,
            (SetSchedule::Custom { rule: r1, .. }, SetSchedule::Custom { rule: r2, .. }) => {
                Arc::ptr_eq(r1, r2)
            }
            _ => false,
        }
    }
}

pub fn make_static_schedule(set: ObservableSet) -> SetSchedule {
    SetSchedule::Static { set }
}

/// Adaptive schedule chasing the last state, with the cyclic permutation
/// `i -> (i + 1) mod d` (a coordinate swap when `d = 2`). Starts from the
/// full space.
pub fn make_chasing_schedule(offsets: Vec<f64>) -> Result<SetSchedule> {
    let d = offsets.len();
    let permutation = (0..d).map(|i| (i + 1) % d).collect();
    make_chasing_schedule_with(offsets, permutation)
}

pub fn make_chasing_schedule_with(offsets: Vec<f64>, permutation: Vec<usize>) -> Result<SetSchedule> {
    let d = offsets.len();
    positive_dim(d)?;
    check_dim(d, permutation.len())?;
    let mut seen = vec![false; d];
    for &p in &permutation {
        if p >= d || seen[p] {
            return Err(Error::InvalidSet(format!("{permutation:?} is not a permutation")));
        }
        seen[p] = true;
    }
    if offsets.iter().any(|o| o.is_nan() || *o == f64::INFINITY) {
        return Err(Error::InvalidSet("chasing offsets must be finite or -inf".into()));
    }
    Ok(SetSchedule::Chasing {
        offsets,
        permutation,
        initial: ObservableSet::full_space(d)?,
    })
}

impl SetSchedule {
    pub fn custom<F>(initial: ObservableSet, rule: F) -> Self
    where
        F: Fn(usize, &[f64]) -> ObservableSet + Send + Sync + 'static,
    {
        SetSchedule::Custom {
            dim: initial.dim(),
            initial,
            rule: Arc::new(rule),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SetSchedule::Static { set } => set.dim(),
            SetSchedule::Chasing { offsets, .. } => offsets.len(),
            SetSchedule::Custom { dim, .. } => *dim,
        }
    }

    /// `S_1`.
    pub fn initial(&self) -> ObservableSet {
        match self {
            SetSchedule::Static { set } => set.clone(),
            SetSchedule::Chasing { initial, .. } | SetSchedule::Custom { initial, .. } => {
                initial.clone()
            }
        }
    }

    /// `S_{t+1}` given the step index `t` and the state `x_t`.
    pub fn next_set(&self, t: usize, x_t: &[f64]) -> Result<ObservableSet> {
        check_dim(self.dim(), x_t.len())?;
        match self {
            SetSchedule::Static { set } => Ok(set.clone()),
            SetSchedule::Chasing {
                offsets,
                permutation,
                ..
            } => {
                let lower = offsets
                    .iter()
                    .zip(permutation)
                    .map(|(o, &p)| x_t[p] + o)
                    .collect::<Vec<_>>();
                let upper = vec![f64::INFINITY; lower.len()];
                ObservableSet::axis_box(lower, upper)
            }
            SetSchedule::Custom { dim, rule, .. } => {
                let set = rule(t, x_t);
                check_dim(*dim, set.dim())?;
                Ok(set)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NormalStream;

    fn e1(d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[0] = 1.0;
        v
    }

    #[test]
    fn full_space_contains_everything() {
        let s = ObservableSet::full_space(3).unwrap();
        assert!(s.contains(&[1e9, -4.0, 0.0]).unwrap());
    }

    #[test]
    fn half_space_is_closed() {
        let s = ObservableSet::half_space(e1(2), 0.5).unwrap();
        assert!(!s.contains(&[0.4, 9.0]).unwrap());
        assert!(s.contains(&[0.5, -9.0]).unwrap());
    }

    #[test]
    fn two_slab_membership() {
        let s = ObservableSet::two_slab(2, 0, 2.0).unwrap();
        assert!(!s.contains(&[1.0, 0.0]).unwrap());
        assert!(s.contains(&[-0.1, 0.0]).unwrap());
        assert!(s.contains(&[2.0, 0.0]).unwrap());
        assert!(s.contains(&[0.0, 5.0]).unwrap());
    }

    #[test]
    fn two_slab_default_gap_is_sqrt_d() {
        match ObservableSet::two_slab_default(16, 0).unwrap() {
            ObservableSet::TwoSlab { gap, .. } => assert_eq!(gap, 4.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let s = ObservableSet::full_space(2).unwrap();
        assert!(matches!(
            s.contains(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn construction_validates() {
        assert!(ObservableSet::half_space(vec![0.0, 0.0], 1.0).is_err());
        assert!(ObservableSet::axis_box(vec![1.0], vec![0.0]).is_err());
        assert!(ObservableSet::axis_box(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(ObservableSet::two_slab(2, 2, 1.0).is_err());
        assert!(ObservableSet::intersection(vec![
            ObservableSet::full_space(2).unwrap(),
            ObservableSet::full_space(3).unwrap()
        ])
        .is_err());
        assert!(ObservableSet::full_space(0).is_err());
    }

    #[test]
    fn static_schedule_ignores_inputs() {
        let sched = make_static_schedule(ObservableSet::full_space(1).unwrap());
        assert_eq!(sched.next_set(7, &[3.0]).unwrap(), ObservableSet::FullSpace { dim: 1 });
        let h = ObservableSet::half_space(vec![1.0], 0.3).unwrap();
        let sched = make_static_schedule(h.clone());
        assert_eq!(sched.next_set(1, &[-2.0]).unwrap(), sched.next_set(99, &[5.0]).unwrap());
        assert_eq!(sched.initial(), h);
    }

    #[test]
    fn chasing_schedule_follows_permuted_state() {
        let sched = make_chasing_schedule(vec![0.4, 0.2]).unwrap();
        let s = sched.next_set(1, &[1.0, 2.0]).unwrap();
        match &s {
            ObservableSet::AxisBox { lower, .. } => {
                assert!((lower[0] - 2.4).abs() < 1e-15);
                assert!((lower[1] - 1.2).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(s.contains(&[2.4, 1.2]).unwrap());
        assert!(!s.contains(&[2.39, 1.2]).unwrap());
        assert!(!s.contains(&[2.4, 1.19]).unwrap());
    }

    #[test]
    fn chasing_with_neg_infinite_offsets_is_everything() {
        let sched = make_chasing_schedule(vec![f64::NEG_INFINITY; 2]).unwrap();
        let s = sched.next_set(3, &[100.0, -100.0]).unwrap();
        let mut rng = NormalStream::new(3);
        for _ in 0..1000 {
            let p = [1e3 * rng.normal(), 1e3 * rng.normal()];
            assert!(s.contains(&p).unwrap());
        }
    }

    #[test]
    fn chasing_rejects_bad_permutation() {
        assert!(make_chasing_schedule_with(vec![0.0, 0.0], vec![0, 0]).is_err());
    }

    #[test]
    fn serde_tagged_record() {
        let s = ObservableSet::half_space(vec![1.0, 0.0], 0.5).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"type":"halfspace","normal":[1.0,0.0],"offset":0.5}"#);
        let back: ObservableSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"type":"halfspace","normal":[0.0,0.0],"offset":0.5}"#;
        assert!(serde_json::from_str::<ObservableSet>(bad).is_err());
    }

    #[test]
    fn schedule_round_trips_through_toml() {
        #[derive(Serialize, Deserialize)]
        struct Wrap {
            schedule: SetSchedule,
        }
        let w = Wrap {
            schedule: make_chasing_schedule(vec![0.4, 0.2]).unwrap(),
        };
        let text = toml::to_string(&w).unwrap();
        let back: Wrap = toml::from_str(&text).unwrap();
        let x = [0.3, -1.0];
        assert_eq!(
            back.schedule.next_set(2, &x).unwrap(),
            w.schedule.next_set(2, &x).unwrap()
        );
    }

    #[test]
    fn chasing_config_defaults_and_validation() {
        let short: SetSchedule = serde_json::from_str(r#"{"type":"chasing","offsets":[0.0,1.0]}"#).unwrap();
        assert_eq!(short, make_chasing_schedule(vec![0.0, 1.0]).unwrap());
        let bad = r#"{"type":"chasing","offsets":[0.0,1.0],"permutation":[1,1]}"#;
        assert!(serde_json::from_str::<SetSchedule>(bad).is_err());
        let wrong_dim = r#"{"type":"chasing","offsets":[0.0,1.0],"initial":{"type":"full_space","dim":3}}"#;
        assert!(serde_json::from_str::<SetSchedule>(wrong_dim).is_err());
        let typo = r#"{"type":"chasing","offset":[0.0,1.0]}"#;
        assert!(serde_json::from_str::<SetSchedule>(typo).is_err());
        let extra = r#"{"type":"halfspace","normal":[1.0],"offset":0.0,"gap":1.0}"#;
        assert!(serde_json::from_str::<ObservableSet>(extra).is_err());
    }
}
