//! Domains, point sets, masks and the elementary random-set operations.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned box in ℝ^d, optionally with a distinguished time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr")]
pub struct Domain {
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    ordered_axis: Option<usize>,
}

#[derive(Deserialize)]
struct DomainRepr {
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    ordered_axis: Option<usize>,
}

impl TryFrom<DomainRepr> for Domain {
    type Error = Error;

    fn try_from(r: DomainRepr) -> Result<Self> {
        Domain::new(r.dim, r.lower, r.upper, r.ordered_axis)
    }
}

impl Domain {
    pub fn new(
        dim: usize,
        lower: Vec<f64>,
        upper: Vec<f64>,
        ordered_axis: Option<usize>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDomain("dimension must be positive".into()));
        }
        if lower.len() != dim || upper.len() != dim {
            return Err(Error::InvalidDomain(format!(
                "bounds have lengths {}/{} but dim is {dim}",
                lower.len(),
                upper.len()
            )));
        }
        for i in 0..dim {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(Error::InvalidDomain(format!(
                    "axis {i}: need finite lower < upper, got [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        if let Some(axis) = ordered_axis {
            if axis >= dim {
                return Err(Error::InvalidDomain(format!(
                    "ordered axis {axis} out of range for dim {dim}"
                )));
            }
        }
        Ok(Domain {
            dim,
            lower,
            upper,
            ordered_axis,
        })
    }

    /// The normalized box [-1, 1]^d.
    pub fn canonical(dim: usize, ordered_axis: Option<usize>) -> Result<Self> {
        Domain::new(dim, vec![-1.0; dim], vec![1.0; dim], ordered_axis)
    }

    /// Unit box [0, 1]^d.
    pub fn unit(dim: usize, ordered_axis: Option<usize>) -> Result<Self> {
        Domain::new(dim, vec![0.0; dim], vec![1.0; dim], ordered_axis)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn ordered_axis(&self) -> Option<usize> {
        self.ordered_axis
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// The normalized counterpart of this domain.
    pub fn to_canonical_domain(&self) -> Domain {
        Domain::canonical(self.dim, self.ordered_axis).expect("dim is positive")
    }

    /// Affine map of a point of this domain into [-1, 1]^d.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| {
                let y = 2.0 * (v - self.lower[i]) / (self.upper[i] - self.lower[i]) - 1.0;
                y.clamp(-1.0, 1.0)
            })
            .collect()
    }

    /// Inverse of [`Domain::normalize`].
    pub fn denormalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(i, v)| {
                let x = self.lower[i] + 0.5 * (v + 1.0) * (self.upper[i] - self.lower[i]);
                x.clamp(self.lower[i], self.upper[i])
            })
            .collect()
    }

    /// Uniform location inside the box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim)
            .map(|i| rng.random_range(self.lower[i]..=self.upper[i]))
            .collect()
    }
}

/// Key under which two coordinates count as the same location.
fn coord_key(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

/// A finite simple point set on a domain.
///
/// Coordinates are stored flat, row-major. Point order carries no meaning.
#[derive(Clone, PartialEq)]
pub struct PointSet {
    domain: Arc<Domain>,
    coords: Vec<f64>,
}

impl fmt::Debug for PointSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

impl PointSet {
    pub fn empty(domain: Arc<Domain>) -> Self {
        PointSet {
            domain,
            coords: Vec::new(),
        }
    }

    /// Validated construction: every point inside the box, no duplicates.
    pub fn new(domain: Arc<Domain>, points: &[Vec<f64>]) -> Result<Self> {
        let dim = domain.dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(domain, coords)
    }

    pub fn from_flat(domain: Arc<Domain>, coords: Vec<f64>) -> Result<Self> {
        let dim = domain.dim();
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: coords.len() % dim,
            });
        }
        for (index, p) in coords.chunks_exact(dim).enumerate() {
            if !domain.contains(p) {
                return Err(Error::OutOfDomain {
                    index,
                    coords: p.to_vec(),
                });
            }
        }
        let set = PointSet { domain, coords };
        if let Some(i) = set.find_duplicate() {
            return Err(Error::DuplicatePoint {
                coords: set.point(i).to_vec(),
            });
        }
        Ok(set)
    }

    pub(crate) fn from_flat_unchecked(domain: Arc<Domain>, coords: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len() % domain.dim(), 0);
        PointSet { domain, coords }
    }

    fn find_duplicate(&self) -> Option<usize> {
        let n = self.len();
        if n < 2 {
            return None;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by(|&a, &b| self.key_cmp(a, b));
        order
            .windows(2)
            .find(|w| self.key_cmp(w[0], w[1]).is_eq())
            .map(|w| w[1])
    }

    fn key_cmp(&self, a: usize, b: usize) -> std::cmp::Ordering {
        let pa = self.point(a).iter().map(|v| coord_key(*v));
        let pb = self.point(b).iter().map(|v| coord_key(*v));
        pa.cmp(pb)
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim())
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }

    /// Points at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut coords = Vec::with_capacity(indices.len() * self.dim());
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        PointSet::from_flat_unchecked(self.domain.clone(), coords)
    }

    /// Points in ascending lexicographic coordinate order; a canonical form
    /// for comparing sets.
    pub fn sorted(&self) -> PointSet {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        self.select(&order)
    }

    /// Set equality, ignoring order.
    pub fn same_set(&self, other: &PointSet) -> bool {
        self.dim() == other.dim()
            && self.len() == other.len()
            && self.sorted().coords == other.sorted().coords
    }

    /// Re-express the set on another domain after an affine map of its points.
    pub fn map_to(&self, target: Arc<Domain>, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<PointSet> {
        let mut coords = Vec::with_capacity(self.coords.len());
        for p in self.iter() {
            coords.extend(f(p));
        }
        PointSet::from_flat(target, coords)
    }

    /// This set in normalized [-1, 1]^d coordinates.
    pub fn normalized(&self, target: &Arc<Domain>) -> Result<PointSet> {
        let src = self.domain.clone();
        self.map_to(target.clone(), |p| src.normalize(p))
    }

    /// This set mapped from normalized coordinates back onto `raw`.
    pub fn denormalized(&self, raw: &Arc<Domain>) -> Result<PointSet> {
        let raw2 = raw.clone();
        self.map_to(raw.clone(), |p| raw2.denormalize(p))
    }
}

/// A closed axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidArgument(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u))
        {
            return Err(Error::InvalidArgument(format!(
                "box needs finite lower <= upper, got {lower:?} / {upper:?}"
            )));
        }
        Ok(AxisBox { lower, upper })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }
}

pub type PointPredicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Binary predicate C on the domain; C(x) = 1 marks the conditioned region.
#[derive(Clone)]
pub enum Mask {
    /// C(x) = 1 iff x lies in some box; `complement` flips that.
    Boxes {
        boxes: Vec<AxisBox>,
        complement: bool,
    },
    Predicate(PointPredicate),
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mask::Boxes { boxes, complement } => f
                .debug_struct("Mask")
                .field("boxes", boxes)
                .field("complement", complement)
                .finish(),
            Mask::Predicate(_) => f.write_str("Mask(<predicate>)"),
        }
    }
}

impl Mask {
    pub fn from_boxes(boxes: Vec<AxisBox>) -> Self {
        Mask::Boxes {
            boxes,
            complement: false,
        }
    }

    /// C ≡ 0.
    pub fn nothing() -> Self {
        Mask::from_boxes(Vec::new())
    }

    /// C ≡ 1.
    pub fn everything() -> Self {
        Mask::Boxes {
            boxes: Vec::new(),
            complement: true,
        }
    }

    pub fn predicate(f: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        Mask::Predicate(Arc::new(f))
    }

    /// Forecasting mask: everything strictly before `split` on `axis` is known.
    pub fn before(domain: &Domain, axis: usize, split: f64) -> Result<Self> {
        if axis >= domain.dim() {
            return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
        }
        Ok(Mask::predicate(move |x| x[axis] < split))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Mask::Boxes { boxes, complement } => boxes.iter().any(|b| b.contains(x)) != *complement,
            Mask::Predicate(f) => f(x),
        }
    }

    /// C(x) ∈ {0, 1}.
    pub fn eval(&self, x: &[f64]) -> u8 {
        u8::from(self.contains(x))
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if let Mask::Boxes { boxes, .. } = self {
            for b in boxes {
                if b.lower.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: b.lower.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Box mask re-expressed in normalized coordinates of `domain`.
    ///
    /// Predicate masks are wrapped so they keep seeing raw coordinates.
    pub fn normalized(&self, domain: &Domain) -> Result<Mask> {
        self.check_dim(domain.dim())?;
        Ok(match self {
            Mask::Boxes { boxes, complement } => Mask::Boxes {
                boxes: boxes
                    .iter()
                    .map(|b| {
                        let map = |x: &[f64]| -> Vec<f64> {
                            x.iter()
                                .enumerate()
                                .map(|(i, v)| {
                                    2.0 * (v - domain.lower()[i])
                                        / (domain.upper()[i] - domain.lower()[i])
                                        - 1.0
                                })
                                .collect()
                        };
                        AxisBox {
                            lower: map(&b.lower),
                            upper: map(&b.upper),
                        }
                    })
                    .collect(),
                complement: *complement,
            },
            Mask::Predicate(f) => {
                let f = f.clone();
                let raw = domain.clone();
                Mask::predicate(move |y| f(&raw.denormalize(y)))
            }
        })
    }
}

/// A latent X_t split into points retained from X₀ and noise points.
///
/// `origin[i]` is the index in the reference X₀ of `retained.point(i)`; set
/// arithmetic against X₀ goes through these indices, never coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledState {
    pub t: usize,
    pub retained: PointSet,
    pub origin: Vec<usize>,
    pub noise: PointSet,
}

impl LabeledState {
    /// The noise-free state X_0 = (X₀, ∅).
    pub fn data(x0: &PointSet) -> Self {
        LabeledState {
            t: 0,
            retained: x0.clone(),
            origin: (0..x0.len()).collect(),
            noise: PointSet::empty(x0.domain().clone()),
        }
    }

    /// A state with no retained points.
    pub fn all_noise(noise: PointSet, t: usize) -> Self {
        LabeledState {
            t,
            retained: PointSet::empty(noise.domain().clone()),
            origin: Vec::new(),
            noise,
        }
    }

    pub fn len(&self) -> usize {
        self.retained.len() + self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// X_t = retained ∪ noise, retained points first.
    pub fn latent(&self) -> PointSet {
        let mut coords = self.retained.coords().to_vec();
        coords.extend_from_slice(self.noise.coords());
        PointSet::from_flat_unchecked(self.retained.domain().clone(), coords)
    }

    /// Check that the retained part is a labeled subset of `x0`.
    pub fn check_against(&self, x0: &PointSet) -> Result<()> {
        if self.origin.len() != self.retained.len() {
            return Err(Error::InconsistentLabels(format!(
                "{} origin labels for {} retained points",
                self.origin.len(),
                self.retained.len()
            )));
        }
        let mut seen = vec![false; x0.len()];
        for (i, &o) in self.origin.iter().enumerate() {
            if o >= x0.len() || seen[o] {
                return Err(Error::InconsistentLabels(format!(
                    "retained point {i} has invalid origin {o}"
                )));
            }
            seen[o] = true;
            if x0.point(o) != self.retained.point(i) {
                return Err(Error::InconsistentLabels(format!(
                    "retained point {i} does not match its origin {o} in X0"
                )));
            }
        }
        Ok(())
    }
}

/// N(A): the number of points of `x` with A(x) = 1.
pub fn count(x: &PointSet, a: &Mask) -> usize {
    x.iter().filter(|p| a.contains(p)).count()
}

/// X ∪ Y.
pub fn superpose(x: &PointSet, y: &PointSet) -> Result<PointSet> {
    if x.domain() != y.domain() {
        return Err(Error::DomainMismatch(
            "superposed sets live on different domains".into(),
        ));
    }
    let mut coords = Vec::with_capacity(x.coords().len() + y.coords().len());
    coords.extend_from_slice(x.coords());
    coords.extend_from_slice(y.coords());
    let out = PointSet::from_flat_unchecked(x.domain().clone(), coords);
    if let Some(i) = out.find_duplicate() {
        return Err(Error::DuplicatePoint {
            coords: out.point(i).to_vec(),
        });
    }
    Ok(out)
}

pub(crate) fn check_prob(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

/// Indices of `0..n` kept by independent Bernoulli(keep_prob) trials.
pub fn thin_indices<R: Rng + ?Sized>(n: usize, keep_prob: f64, rng: &mut R) -> Result<Vec<usize>> {
    check_prob(keep_prob)?;
    Ok((0..n).filter(|_| rng.random_bool(keep_prob)).collect())
}

/// Independent thinning: each point kept with probability `keep_prob`.
pub fn thin<R: Rng + ?Sized>(x: &PointSet, keep_prob: f64, rng: &mut R) -> Result<PointSet> {
    let kept = thin_indices(x.len(), keep_prob, rng)?;
    Ok(x.select(&kept))
}

/// (C(X), C′(X)).
pub fn split_by_mask(x: &PointSet, c: &Mask) -> (PointSet, PointSet) {
    let (inside, outside): (Vec<usize>, Vec<usize>) =
        (0..x.len()).partition(|&i| c.contains(x.point(i)));
    (x.select(&inside), x.select(&outside))
}

/// Homogeneous Poisson sample with the given intensity on the domain box.
pub fn sample_poisson<R: Rng + ?Sized>(
    domain: &Arc<Domain>,
    intensity: f64,
    rng: &mut R,
) -> Result<PointSet> {
    if !(intensity.is_finite() && intensity >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "intensity must be finite and nonnegative, got {intensity}"
        )));
    }
    let mean = intensity * domain.volume();
    let n = poisson_count(mean, rng);
    let mut coords = Vec::with_capacity(n * domain.dim());
    let mut seen = std::collections::HashSet::with_capacity(n);
    while coords.len() < n * domain.dim() {
        let p = domain.sample_uniform(rng);
        if seen.insert(p.iter().map(|v| coord_key(*v)).collect::<Vec<_>>()) {
            coords.extend(p);
        }
    }
    Ok(PointSet::from_flat_unchecked(domain.clone(), coords))
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    use rand_distr::{Distribution, Poisson};
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .expect("positive finite mean")
        .sample(rng) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    fn line() -> Arc<Domain> {
        Arc::new(Domain::unit(1, Some(0)).unwrap())
    }

    fn set1(pts: &[f64]) -> PointSet {
        let d = line();
        PointSet::new(d, &pts.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap()
    }

    fn interval(a: f64, b: f64) -> Mask {
        Mask::from_boxes(vec![AxisBox::new(vec![a], vec![b]).unwrap()])
    }

    #[test]
    fn domain_validation() {
        assert!(Domain::new(0, vec![], vec![], None).is_err());
        assert!(Domain::new(1, vec![1.0], vec![1.0], None).is_err());
        assert!(Domain::new(2, vec![0.0, 0.0], vec![1.0, 1.0], Some(2)).is_err());
        let d = Domain::new(2, vec![0.0, -2.0], vec![4.0, 2.0], Some(0)).unwrap();
        assert_eq!(d.volume(), 16.0);
        let y = d.normalize(&[1.0, 2.0]);
        assert_eq!(y, vec![-0.5, 1.0]);
        assert_eq!(d.denormalize(&y), vec![1.0, 2.0]);
    }

    #[test]
    fn pointset_rejects_outside_and_duplicates() {
        let d = line();
        assert!(matches!(
            PointSet::new(d.clone(), &[vec![1.5]]),
            Err(Error::OutOfDomain { index: 0, .. })
        ));
        assert!(matches!(
            PointSet::new(d.clone(), &[vec![0.5], vec![0.2], vec![0.5]]),
            Err(Error::DuplicatePoint { .. })
        ));
        assert!(matches!(
            PointSet::new(d.clone(), &[vec![0.0], vec![-0.0]]),
            Err(Error::DuplicatePoint { .. })
        ));
        assert!(PointSet::new(d, &[vec![0.5, 0.1]]).is_err());
    }

    #[test]
    fn count_examples() {
        let x = set1(&[]);
        assert_eq!(count(&x, &interval(0.0, 1.0)), 0);
        let x = set1(&[0.1, 0.5]);
        assert_eq!(count(&x, &interval(0.0, 0.3)), 1);
    }

    #[test]
    fn superpose_examples() {
        let x = set1(&[0.1]);
        let e = set1(&[]);
        assert!(superpose(&x, &e).unwrap().same_set(&x));
        let u = superpose(&x, &set1(&[0.2])).unwrap();
        assert!(u.same_set(&set1(&[0.1, 0.2])));
        assert!(matches!(
            superpose(&x, &set1(&[0.1])),
            Err(Error::DuplicatePoint { .. })
        ));
        let other = PointSet::empty(Arc::new(Domain::unit(1, None).unwrap()));
        assert!(matches!(
            superpose(&x, &other),
            Err(Error::DomainMismatch(_))
        ));
    }

    #[test]
    fn thin_endpoints_and_errors() {
        let mut rng = SeedStream::new(1).rng();
        let x = set1(&[0.1, 0.4, 0.7]);
        assert_eq!(thin(&x, 1.0, &mut rng).unwrap(), x);
        assert!(thin(&x, 0.0, &mut rng).unwrap().is_empty());
        assert!(matches!(
            thin(&x, 1.5, &mut rng),
            Err(Error::InvalidProbability(_))
        ));
        assert!(thin(&x, -0.1, &mut rng).is_err());
    }

    #[test]
    fn split_examples() {
        let x = set1(&[0.1, 0.9]);
        let (a, b) = split_by_mask(&x, &Mask::everything());
        assert_eq!((a.len(), b.len()), (2, 0));
        let (a, b) = split_by_mask(&x, &Mask::nothing());
        assert_eq!((a.len(), b.len()), (0, 2));
        let (a, b) = split_by_mask(&x, &interval(0.0, 0.5));
        assert!(a.same_set(&set1(&[0.1])));
        assert!(b.same_set(&set1(&[0.9])));
    }

    #[test]
    fn complement_mask_flips() {
        let m = Mask::Boxes {
            boxes: vec![AxisBox::new(vec![0.0], vec![0.5]).unwrap()],
            complement: true,
        };
        assert_eq!(m.eval(&[0.2]), 0);
        assert_eq!(m.eval(&[0.7]), 1);
    }

    #[test]
    fn mask_normalization_matches_raw() {
        let d = Domain::new(2, vec![0.0, 10.0], vec![2.0, 20.0], None).unwrap();
        let m = Mask::from_boxes(vec![AxisBox::new(vec![0.5, 12.0], vec![1.0, 15.0]).unwrap()]);
        let n = m.normalized(&d).unwrap();
        let mut rng = SeedStream::new(3).rng();
        for _ in 0..1000 {
            let x = d.sample_uniform(&mut rng);
            assert_eq!(m.contains(&x), n.contains(&d.normalize(&x)));
        }
    }

    #[test]
    fn labeled_state_checks() {
        let x0 = set1(&[0.1, 0.2, 0.3]);
        let mut s = LabeledState::data(&x0);
        assert!(s.check_against(&x0).is_ok());
        s.origin[0] = 1;
        assert!(s.check_against(&x0).is_err());
        let s = LabeledState {
            t: 1,
            retained: set1(&[0.3]),
            origin: vec![2],
            noise: set1(&[0.5]),
        };
        assert!(s.check_against(&x0).is_ok());
        assert_eq!(s.latent().len(), 2);
    }

    #[test]
    fn poisson_sample_in_box() {
        let d = Arc::new(Domain::new(2, vec![-3.0, 0.0], vec![1.0, 0.5], None).unwrap());
        let mut rng = SeedStream::new(9).rng();
        let x = sample_poisson(&d, 50.0, &mut rng).unwrap();
        assert!(x.iter().all(|p| d.contains(p)));
        assert!(sample_poisson(&d, 0.0, &mut rng).unwrap().is_empty());
        assert!(sample_poisson(&d, -1.0, &mut rng).is_err());
    }
}
