//! Convex domain primitives: membership, closest-point boundary projection,
//! outward normals, and the mirror reflection used by the symmetrized Euler
//! scheme.
//!
//! Two domain shapes are supported: the half-plane `{x : x_1 >= offset}`
//! (axis-aligned, any ambient dimension) and the closed disk in the plane.
//! Both admit closed-form projections, so all operations are exact up to
//! floating-point rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack on the squared-radius membership test of the disk.
///
/// Projected and reflected points land on the boundary up to a couple of
/// ulps; a closed domain must still report them as members.
const MEMBERSHIP_SLACK: f64 = 16.0 * f64::EPSILON;

/// Mirror reflections applied before falling back to boundary projection.
/// A single mirror can exit the disk again for points far outside; each
/// extra mirror moves the radius 2R closer, so four attempts cover every
/// step size seen in practice.
const MAX_MIRROR_ATTEMPTS: usize = 4;

fn default_dim() -> usize {
    2
}

/// Closed convex domain confining the particle systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvexDomain {
    /// `{x : x_1 >= offset}`. Unbounded, but the attractive dynamics keep
    /// ensembles in a bounded region, so it behaves like a large box.
    HalfPlane {
        #[serde(default)]
        offset: f64,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    /// Closed disk `{x : |x - center| <= radius}` in the plane.
    Disk { center: [f64; 2], radius: f64 },
}

impl ConvexDomain {
    /// The half-plane `{x : x_1 >= 0}` in the plane.
    pub fn half_plane() -> Self {
        ConvexDomain::HalfPlane {
            offset: 0.0,
            dim: 2,
        }
    }

    /// A disk with the given center and radius (radius must be positive).
    pub fn disk(center: [f64; 2], radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidDomain(format!(
                "disk radius must be positive and finite, got {radius}"
            )));
        }
        Ok(ConvexDomain::Disk { center, radius })
    }

    /// Validates invariants of a descriptor built by deserialization.
    pub fn validate(&self) -> Result<()> {
        match *self {
            ConvexDomain::HalfPlane { offset, dim } => {
                if dim == 0 {
                    return Err(Error::InvalidDomain("half-plane dimension must be >= 1".into()));
                }
                if !offset.is_finite() {
                    return Err(Error::InvalidDomain("half-plane offset must be finite".into()));
                }
                Ok(())
            }
            ConvexDomain::Disk { center, radius } => {
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(Error::InvalidDomain(format!(
                        "disk radius must be positive and finite, got {radius}"
                    )));
                }
                if !center.iter().all(|c| c.is_finite()) {
                    return Err(Error::InvalidDomain("disk center must be finite".into()));
                }
                Ok(())
            }
        }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match *self {
            ConvexDomain::HalfPlane { dim, .. } => dim,
            ConvexDomain::Disk { .. } => 2,
        }
    }

    /// Characteristic length used to scale boundary tolerances.
    pub fn scale(&self) -> f64 {
        match *self {
            ConvexDomain::HalfPlane { offset, .. } => offset.abs().max(1.0),
            ConvexDomain::Disk { radius, .. } => radius,
        }
    }

    /// Tolerance for "is this point on the boundary" checks.
    pub fn boundary_tol(&self) -> f64 {
        1e-9 * self.scale()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Membership in the closed domain.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        Ok(self.contains_unchecked(x))
    }

    #[inline]
    pub(crate) fn contains_unchecked(&self, x: &[f64]) -> bool {
        match *self {
            ConvexDomain::HalfPlane { offset, .. } => x[0] >= offset,
            ConvexDomain::Disk { center, radius } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                dx * dx + dy * dy <= radius * radius * (1.0 + MEMBERSHIP_SLACK)
            }
        }
    }

    /// Closest point on the boundary. Errors with
    /// [`Error::DegenerateProjection`] for the exact disk center, where the
    /// projection direction is undefined.
    pub fn project_boundary(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = x.to_vec();
        self.project_boundary_in_place(&mut out)?;
        Ok(out)
    }

    fn project_boundary_in_place(&self, x: &mut [f64]) -> Result<()> {
        match *self {
            ConvexDomain::HalfPlane { offset, .. } => {
                x[0] = offset;
                Ok(())
            }
            ConvexDomain::Disk { center, radius } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                let r = (dx * dx + dy * dy).sqrt();
                if r == 0.0 {
                    return Err(Error::DegenerateProjection);
                }
                let s = radius / r;
                x[0] = center[0] + dx * s;
                x[1] = center[1] + dy * s;
                Ok(())
            }
        }
    }

    /// Outward unit normal at a boundary point `b`. The point must lie
    /// within [`Self::boundary_tol`] of the boundary.
    pub fn outward_normal(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(b)?;
        let tol = self.boundary_tol();
        match *self {
            ConvexDomain::HalfPlane { offset, dim } => {
                let dist = (b[0] - offset).abs();
                if dist > tol {
                    return Err(Error::NotOnBoundary { dist, tol });
                }
                let mut n = vec![0.0; dim];
                n[0] = -1.0;
                Ok(n)
            }
            ConvexDomain::Disk { center, radius } => {
                let dx = b[0] - center[0];
                let dy = b[1] - center[1];
                let r = (dx * dx + dy * dy).sqrt();
                let dist = (r - radius).abs();
                if dist > tol {
                    return Err(Error::NotOnBoundary { dist, tol });
                }
                if r == 0.0 {
                    return Err(Error::DegenerateProjection);
                }
                Ok(vec![dx / r, dy / r])
            }
        }
    }

    /// Mirror reflection across the boundary: identity inside the domain,
    /// otherwise `x - 2[(x - Px) . n] n` with `Px` the closest boundary
    /// point. If the mirror image is still outside, the mirror is applied
    /// again up to [`MAX_MIRROR_ATTEMPTS`] times and then the point is
    /// projected onto the boundary, so the result is always in the domain.
    pub fn reflect(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = x.to_vec();
        self.reflect_in_place(&mut out)?;
        Ok(out)
    }

    /// In-place variant of [`Self::reflect`] for hot loops.
    pub fn reflect_in_place(&self, x: &mut [f64]) -> Result<()> {
        for _ in 0..MAX_MIRROR_ATTEMPTS {
            if self.contains_unchecked(x) {
                return Ok(());
            }
            self.mirror_once(x)?;
        }
        if self.contains_unchecked(x) {
            return Ok(());
        }
        self.project_boundary_in_place(x)
    }

    /// One mirror image across the tangent plane at the closest boundary
    /// point. Caller guarantees `x` is outside the domain.
    fn mirror_once(&self, x: &mut [f64]) -> Result<()> {
        match *self {
            ConvexDomain::HalfPlane { offset, .. } => {
                x[0] = 2.0 * offset - x[0];
                Ok(())
            }
            ConvexDomain::Disk { center, radius } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                let r = (dx * dx + dy * dy).sqrt();
                if r == 0.0 {
                    // Unreachable for points outside the disk.
                    return Err(Error::DegenerateProjection);
                }
                // x - 2(r - R) u with u = (x - c)/r lands at radius |2R - r|.
                let s = (2.0 * radius - r) / r;
                x[0] = center[0] + dx * s;
                x[1] = center[1] + dy * s;
                Ok(())
            }
        }
    }

    /// Endpoint map of the non-diffusive scheme: identity inside the
    /// domain, closest boundary point outside.
    pub fn project_endpoint(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = x.to_vec();
        self.project_endpoint_in_place(&mut out)?;
        Ok(out)
    }

    /// In-place variant of [`Self::project_endpoint`].
    pub fn project_endpoint_in_place(&self, x: &mut [f64]) -> Result<()> {
        if self.contains_unchecked(x) {
            return Ok(());
        }
        self.project_boundary_in_place(x)
    }

    /// True when the axis-aligned box `[min, max]` lies inside the domain.
    /// By convexity it is enough to test the corners.
    pub fn contains_rect(&self, min: &[f64], max: &[f64]) -> Result<bool> {
        self.check_dim(min)?;
        self.check_dim(max)?;
        let d = self.dim();
        let mut corner = vec![0.0; d];
        for mask in 0..(1usize << d) {
            for (j, c) in corner.iter_mut().enumerate() {
                *c = if mask & (1 << j) != 0 { max[j] } else { min[j] };
            }
            if !self.contains_unchecked(&corner) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn disk02() -> ConvexDomain {
        ConvexDomain::disk([0.0, 0.0], 0.2).unwrap()
    }

    #[test]
    fn contains_examples() {
        let d = disk02();
        assert!(d.contains(&[0.1, 0.1]).unwrap());
        assert!(d.contains(&[0.2, 0.0]).unwrap()); // boundary point, closed set
        let h = ConvexDomain::half_plane();
        assert!(!h.contains(&[-0.01, 5.0]).unwrap());
        assert!(h.contains(&[0.0, 5.0]).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let d = disk02();
        assert!(matches!(
            d.contains(&[0.1]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn projection_examples() {
        let d = disk02();
        let p = d.project_boundary(&[0.3, 0.0]).unwrap();
        assert_relative_eq!(p[0], 0.2, max_relative = 1e-15);
        assert_relative_eq!(p[1], 0.0);

        // 0.2 * x/|x| with |x| = 0.5
        let p = d.project_boundary(&[0.3, 0.4]).unwrap();
        assert_relative_eq!(p[0], 0.12, max_relative = 1e-14);
        assert_relative_eq!(p[1], 0.16, max_relative = 1e-14);

        let h = ConvexDomain::half_plane();
        let p = h.project_boundary(&[-0.1, 0.3]).unwrap();
        assert_eq!(p, vec![0.0, 0.3]);
    }

    #[test]
    fn projection_at_disk_center_is_degenerate() {
        let d = disk02();
        assert!(matches!(
            d.project_boundary(&[0.0, 0.0]),
            Err(Error::DegenerateProjection)
        ));
    }

    #[test]
    fn outward_normal_examples() {
        let h = ConvexDomain::half_plane();
        assert_eq!(h.outward_normal(&[0.0, 7.0]).unwrap(), vec![-1.0, 0.0]);

        let d = disk02();
        assert_eq!(d.outward_normal(&[0.2, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(d.outward_normal(&[0.0, -0.2]).unwrap(), vec![0.0, -1.0]);

        assert!(matches!(
            d.outward_normal(&[0.1, 0.0]),
            Err(Error::NotOnBoundary { .. })
        ));
    }

    #[test]
    fn reflect_examples() {
        let h = ConvexDomain::half_plane();
        assert_eq!(h.reflect(&[-0.1, 0.3]).unwrap(), vec![0.1, 0.3]);

        let d = disk02();
        assert_eq!(d.reflect(&[0.15, 0.0]).unwrap(), vec![0.15, 0.0]);
        let r = d.reflect(&[0.25, 0.0]).unwrap();
        assert_relative_eq!(r[0], 0.15, max_relative = 1e-14);
        assert_relative_eq!(r[1], 0.0);
    }

    #[test]
    fn reflect_far_point_falls_back_to_projection() {
        let d = disk02();
        // Radius 5.0 >> 9R: mirrors cannot bring it inside, projection must.
        let r = d.reflect(&[5.0, 0.0]).unwrap();
        assert!(d.contains(&r).unwrap());
        let norm = (r[0] * r[0] + r[1] * r[1]).sqrt();
        assert_relative_eq!(norm, 0.2, max_relative = 1e-12);
    }

    #[test]
    fn serde_round_trip_and_spec_keys() {
        let d: ConvexDomain = serde_json::from_str(r#"{"kind":"half_plane"}"#).unwrap();
        assert_eq!(d, ConvexDomain::half_plane());
        let d: ConvexDomain =
            serde_json::from_str(r#"{"kind":"disk","center":[0,0],"radius":0.2}"#).unwrap();
        assert_eq!(d, disk02());
        let s = serde_json::to_string(&disk02()).unwrap();
        let back: ConvexDomain = serde_json::from_str(&s).unwrap();
        assert_eq!(back, disk02());
    }

    #[test]
    fn rect_containment() {
        let h = ConvexDomain::half_plane();
        assert!(h.contains_rect(&[0.0, -0.125], &[0.25, 0.125]).unwrap());
        assert!(!h.contains_rect(&[-0.01, 0.0], &[0.25, 0.125]).unwrap());
        let d = disk02();
        assert!(d.contains_rect(&[-0.05, 0.0], &[0.05, 0.1]).unwrap());
        assert!(!d.contains_rect(&[-0.05, 0.0], &[0.25, 0.1]).unwrap());
    }

    /// Points on the boundary of the domain, parametrized by `u` in [0, 1).
    fn boundary_point(domain: &ConvexDomain, u: f64, span: f64) -> Vec<f64> {
        match *domain {
            ConvexDomain::HalfPlane { offset, .. } => vec![offset, (u - 0.5) * span],
            ConvexDomain::Disk { center, radius } => {
                let a = u * std::f64::consts::TAU;
                vec![center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            }
        }
    }

    proptest! {
        /// Idempotence on D: reflect(x) = x exactly for x in D.
        #[test]
        fn prop_reflect_is_identity_inside(u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let d = disk02();
            let r = 0.2 * u.sqrt();
            let a = v * std::f64::consts::TAU;
            let x = vec![r * a.cos(), r * a.sin()];
            prop_assume!(d.contains(&x).unwrap());
            prop_assert_eq!(d.reflect(&x).unwrap(), x.clone());

            let h = ConvexDomain::half_plane();
            let y = vec![u, 2.0 * v - 1.0];
            prop_assert_eq!(h.reflect(&y).unwrap(), y);
        }

        /// Projection optimality: |x - Px| <= |x - z| + 1e-12 for boundary samples z.
        #[test]
        fn prop_projection_is_closest(xx in -1.0f64..1.0, xy in -1.0f64..1.0, seed in 0u64..1000) {
            for domain in [disk02(), ConvexDomain::half_plane()] {
                let x = vec![xx, xy];
                prop_assume!(x != [0.0, 0.0]);
                if domain.contains(&x).unwrap() {
                    continue;
                }
                let p = domain.project_boundary(&x).unwrap();
                let dp = ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)).sqrt();
                for k in 0..1000 {
                    let u = ((seed as f64) + (k as f64) * 0.001) % 1.0;
                    let z = boundary_point(&domain, u, 8.0);
                    let dz = ((x[0] - z[0]).powi(2) + (x[1] - z[1]).powi(2)).sqrt();
                    prop_assert!(dp <= dz + 1e-12);
                }
            }
        }

        /// Mirror isometry on the half-plane when a single reflection suffices.
        #[test]
        fn prop_halfplane_mirror_isometry(x0 in -5.0f64..0.0, x1 in -5.0f64..5.0) {
            prop_assume!(x0 < 0.0);
            let h = ConvexDomain::half_plane();
            let x = vec![x0, x1];
            let p = h.project_boundary(&x).unwrap();
            let r = h.reflect(&x).unwrap();
            let din = ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)).sqrt();
            let dout = ((r[0] - p[0]).powi(2) + (r[1] - p[1]).powi(2)).sqrt();
            prop_assert!((din - dout).abs() <= 1e-12);
        }

        /// Convexity: <b - y, n(b)> >= -1e-12 for boundary b and y in D.
        #[test]
        fn prop_convexity_inequality(u in 0.0f64..1.0, w in 0.0f64..1.0, v in 0.0f64..1.0) {
            for domain in [disk02(), ConvexDomain::half_plane()] {
                let b = boundary_point(&domain, u, 8.0);
                let n = domain.outward_normal(&b).unwrap();
                let y = match domain {
                    ConvexDomain::Disk { .. } => {
                        let r = 0.2 * w.sqrt();
                        let a = v * std::f64::consts::TAU;
                        vec![r * a.cos(), r * a.sin()]
                    }
                    ConvexDomain::HalfPlane { .. } => vec![4.0 * w, 8.0 * (v - 0.5)],
                };
                let dot = (b[0] - y[0]) * n[0] + (b[1] - y[1]) * n[1];
                prop_assert!(dot >= -1e-12);
            }
        }

        /// Reflection always lands in the domain, including the fallback path.
        #[test]
        fn prop_reflect_contains(xx in -3.0f64..3.0, xy in -3.0f64..3.0) {
            for domain in [disk02(), ConvexDomain::half_plane()] {
                if xx == 0.0 && xy == 0.0 {
                    continue;
                }
                let r = domain.reflect(&[xx, xy]).unwrap();
                prop_assert!(domain.contains(&r).unwrap());
            }
        }
    }
}
