//! Smooth interval maps with non-flat critical points.
//!
//! A [`MapSpec`] bundles an evaluator, its derivative, the declared critical
//! points and the constants `eta`/`xi`. Everything downstream consumes it
//! read-only.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::interval::Interval;

pub const EPS_NUM: f64 = 1e-12;
const DEFAULT_ETA: f64 = 0.25;
const EXPONENT_TOL: f64 = 0.05;
const C1_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Extremum,
    Inflection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: f64,
    pub kind: CriticalKind,
    pub exponent: f64,
    /// sign of f(x) - f(c) for x just left of c
    pub sign_left: i8,
    /// sign of f(x) - f(c) for x just right of c
    pub sign_right: i8,
}

impl CriticalPoint {
    pub fn is_extremum(&self) -> bool {
        self.kind == CriticalKind::Extremum
    }
}

/// Polynomial piece in the power basis of `x`, valid on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

impl Piece {
    fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    fn deriv(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * x + c * k as f64;
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
enum MapKind {
    /// a x (1 - x) on [0, 1]
    Logistic { a: f64 },
    /// a x^3 + (1 - a) x on [-1, 1]
    CubicBimodal { a: f64 },
    Piecewise { pieces: Vec<Piece> },
}

/// Family name plus parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyHandle {
    pub family: String,
    pub params: Vec<f64>,
}

/// On-disk map description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MapFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pieces: Vec<Piece>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub domain: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub critical_points: Vec<CriticalPointDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointDecl {
    pub location: f64,
    pub kind: CriticalKind,
    pub exponent: f64,
}

#[derive(Debug, Clone)]
pub struct MapSpec {
    kind: MapKind,
    domain: Vec<Interval>,
    hull: Interval,
    critical_points: Vec<CriticalPoint>,
    extrema: Vec<f64>,
    laps: Vec<Interval>,
    eta: f64,
    xi: f64,
    xi_fallback: bool,
    source: MapFile,
}

impl MapSpec {
    pub fn logistic(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(LabError::Parameter(format!("logistic parameter {a} must be positive")));
        }
        let sign = if a > 0.0 { -1 } else { 1 };
        let cps = vec![CriticalPoint {
            location: 0.5,
            kind: CriticalKind::Extremum,
            exponent: 2.0,
            sign_left: sign,
            sign_right: sign,
        }];
        let src = MapFile {
            family: Some("logistic".into()),
            params: vec![a],
            ..Default::default()
        };
        Self::assemble(MapKind::Logistic { a }, vec![Interval { lo: 0.0, hi: 1.0 }], cps, None, None, src)
    }

    /// `a x^3 + (1 - a) x` on `[-1, 1]`, bimodal for `1 < a <= 4`.
    pub fn cubic_bimodal(a: f64) -> Result<Self> {
        if !(a > 1.0 && a.is_finite()) {
            return Err(LabError::Parameter(format!("cubic-bimodal parameter {a} must exceed 1")));
        }
        let c = ((a - 1.0) / (3.0 * a)).sqrt();
        let cps = vec![
            CriticalPoint { location: -c, kind: CriticalKind::Extremum, exponent: 2.0, sign_left: -1, sign_right: -1 },
            CriticalPoint { location: c, kind: CriticalKind::Extremum, exponent: 2.0, sign_left: 1, sign_right: 1 },
        ];
        let src = MapFile {
            family: Some("cubic-bimodal".into()),
            params: vec![a],
            ..Default::default()
        };
        Self::assemble(MapKind::CubicBimodal { a }, vec![Interval { lo: -1.0, hi: 1.0 }], cps, None, None, src)
    }

    pub fn from_family(handle: &FamilyHandle) -> Result<Self> {
        let p = |i: usize| {
            handle
                .params
                .get(i)
                .copied()
                .ok_or_else(|| LabError::Parse(format!("family {} needs {} parameter(s)", handle.family, i + 1)))
        };
        match handle.family.as_str() {
            "logistic" => Self::logistic(p(0)?),
            "cubic-bimodal" => Self::cubic_bimodal(p(0)?),
            "cube" => Self::from_file(&MapFile {
                pieces: vec![Piece { lo: -1.0, hi: 1.0, coeffs: vec![0.0, 0.0, 0.0, 1.0] }],
                domain: vec![[-1.0, 1.0]],
                critical_points: vec![CriticalPointDecl { location: 0.0, kind: CriticalKind::Inflection, exponent: 3.0 }],
                ..Default::default()
            }),
            other => Err(LabError::Parse(format!("unknown family {other:?}"))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MapFile = serde_json::from_str(text).map_err(|e| LabError::Parse(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn from_file(file: &MapFile) -> Result<Self> {
        if let Some(family) = &file.family {
            let mut spec = Self::from_family(&FamilyHandle { family: family.clone(), params: file.params.clone() })?;
            if file.eta.is_some() || file.xi.is_some() {
                spec = Self::assemble(
                    spec.kind.clone(),
                    spec.domain.clone(),
                    spec.critical_points.clone(),
                    file.eta,
                    file.xi,
                    file.clone(),
                )?;
            }
            return Ok(spec);
        }
        if file.pieces.is_empty() {
            return Err(LabError::Parse("map file needs either `family` or `pieces`".into()));
        }
        let mut pieces = file.pieces.clone();
        for p in &pieces {
            if !(p.lo < p.hi) || p.coeffs.is_empty() {
                return Err(LabError::Parse(format!("bad piece [{}, {}]", p.lo, p.hi)));
            }
        }
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let domain: Vec<Interval> = if file.domain.is_empty() {
            vec![Interval { lo: pieces[0].lo, hi: pieces.last().unwrap().hi }]
        } else {
            let mut d = file
                .domain
                .iter()
                .map(|[lo, hi]| Interval::new(*lo, *hi).map_err(|e| LabError::Parse(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            d.sort_by(|a, b| a.lo.total_cmp(&b.lo));
            for w in d.windows(2) {
                if w[0].hi >= w[1].lo {
                    return Err(LabError::Parse("domain components overlap".into()));
                }
            }
            d
        };
        for comp in &domain {
            if !covered_by_pieces(&pieces, comp) {
                return Err(LabError::Parse(format!("pieces do not cover [{}, {}]", comp.lo, comp.hi)));
            }
        }
        let kind = MapKind::Piecewise { pieces };
        let mut cps = Vec::new();
        for decl in &file.critical_points {
            if !(decl.exponent.is_finite() && decl.exponent >= 2.0) {
                return Err(LabError::Parse(format!("critical exponent {} must be finite and >= 2", decl.exponent)));
            }
            let c = decl.location;
            let fc = eval_kind(&kind, c);
            let s = 1e-6;
            let sl = (eval_kind(&kind, c - s) - fc).signum() as i8;
            let sr = (eval_kind(&kind, c + s) - fc).signum() as i8;
            cps.push(CriticalPoint { location: c, kind: decl.kind, exponent: decl.exponent, sign_left: sl, sign_right: sr });
        }
        Self::assemble(kind, domain, cps, file.eta, file.xi, file.clone())
    }

    fn assemble(
        kind: MapKind,
        domain: Vec<Interval>,
        mut critical_points: Vec<CriticalPoint>,
        eta_user: Option<f64>,
        xi_user: Option<f64>,
        source: MapFile,
    ) -> Result<Self> {
        critical_points.sort_by(|a, b| a.location.total_cmp(&b.location));
        let hull = Interval { lo: domain[0].lo, hi: domain.last().unwrap().hi };
        let extrema: Vec<f64> = critical_points.iter().filter(|c| c.is_extremum()).map(|c| c.location).collect();
        let mut laps = Vec::new();
        for comp in &domain {
            let mut lo = comp.lo;
            for &t in extrema.iter().filter(|&&t| comp.contains_open(t)) {
                laps.push(Interval { lo, hi: t });
                lo = t;
            }
            laps.push(Interval { lo, hi: comp.hi });
        }
        // singular gaps: between critical points and from critical points to the boundary
        let mut gap = f64::INFINITY;
        for w in critical_points.windows(2) {
            gap = gap.min(w[1].location - w[0].location);
        }
        for cp in &critical_points {
            if let Some(comp) = domain.iter().find(|d| d.contains(cp.location)) {
                gap = gap.min(cp.location - comp.lo).min(comp.hi - cp.location);
            }
        }
        let user = eta_user.unwrap_or(DEFAULT_ETA);
        if !(user > 0.0) {
            return Err(LabError::Parse("eta must be positive".into()));
        }
        let eta = if gap.is_finite() { user.min(gap / 3.0) } else { user };
        let mut spec = MapSpec {
            kind,
            domain,
            hull,
            critical_points,
            extrema,
            laps,
            eta,
            xi: 0.0,
            xi_fallback: false,
            source,
        };
        match xi_user {
            Some(x) if x > 0.0 => spec.xi = x,
            Some(_) => return Err(LabError::Parse("xi must be positive".into())),
            None => {
                let (xi, fallback) = spec.estimate_xi();
                spec.xi = xi;
                spec.xi_fallback = fallback;
            }
        }
        Ok(spec)
    }

    /// Samples images of `eta`-long intervals containing a critical point and
    /// returns half of the smallest image length seen. If those images
    /// collapse (an attracting cycle swallows them), falls back to the first
    /// image only and flags it.
    fn estimate_xi(&self) -> (f64, bool) {
        const POSITIONS: usize = 9;
        const HORIZON: usize = 400;
        let mut best = f64::INFINITY;
        let mut first = f64::INFINITY;
        let mut collapsed = false;
        let span = self.hull.len();
        for cp in &self.critical_points {
            for k in 0..POSITIONS {
                let t = k as f64 / (POSITIONS - 1) as f64;
                let lo = cp.location - t * self.eta;
                let Ok(j) = self.clamp_interval(Interval { lo, hi: lo + self.eta }) else {
                    continue;
                };
                let mut img = j;
                for m in 1..=HORIZON {
                    img = self.image(&img);
                    let l = img.len();
                    if m == 1 {
                        first = first.min(l);
                    }
                    best = best.min(l);
                    if l < 1e-9 * span {
                        collapsed = true;
                        break;
                    }
                }
            }
        }
        if !best.is_finite() {
            return (0.01 * span, true);
        }
        if collapsed {
            (0.5 * first.max(1e-9 * span), true)
        } else {
            (0.5 * best, false)
        }
    }

    fn clamp_interval(&self, j: Interval) -> Result<Interval> {
        let comp = self
            .component_of(j.mid())
            .ok_or(LabError::Domain { x: j.mid() })?;
        Interval::new(j.lo.max(comp.lo), j.hi.min(comp.hi))
    }

    pub fn domain(&self) -> &[Interval] {
        &self.domain
    }

    /// Convex hull of the phase space.
    pub fn hull(&self) -> Interval {
        self.hull
    }

    /// Lebesgue measure of the phase space.
    pub fn measure(&self) -> f64 {
        self.domain.iter().map(Interval::len).sum()
    }

    pub fn critical_points(&self) -> &[CriticalPoint] {
        &self.critical_points
    }

    /// Sorted extremum locations (turning points).
    pub fn extrema(&self) -> &[f64] {
        &self.extrema
    }

    pub fn num_extrema(&self) -> usize {
        self.extrema.len()
    }

    /// Maximal intervals of monotonicity of `f`.
    pub fn laps(&self) -> &[Interval] {
        &self.laps
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn xi_fallback(&self) -> bool {
        self.xi_fallback
    }

    pub fn source(&self) -> &MapFile {
        &self.source
    }

    /// Family parameter for the single-parameter families.
    pub fn family_parameter(&self) -> Option<f64> {
        match self.kind {
            MapKind::Logistic { a } | MapKind::CubicBimodal { a } => Some(a),
            MapKind::Piecewise { .. } => None,
        }
    }

    pub fn is_logistic(&self) -> bool {
        matches!(self.kind, MapKind::Logistic { .. })
    }

    pub fn in_domain(&self, x: f64) -> bool {
        self.domain.iter().any(|d| d.contains(x))
    }

    pub fn component_of(&self, x: f64) -> Option<Interval> {
        self.domain.iter().copied().find(|d| d.contains(x))
    }

    /// Interior of the phase space.
    pub fn in_interior(&self, j: &Interval) -> bool {
        self.domain.iter().any(|d| d.lo < j.lo && j.hi < d.hi)
    }

    /// `f(x)`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !self.in_domain(x) {
            return Err(LabError::Domain { x });
        }
        Ok(self.f(x))
    }

    /// `f(x)` without the domain check.
    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        eval_kind(&self.kind, x)
    }

    /// `f'(x)`; exactly zero at declared critical points.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        if !self.in_domain(x) {
            return Err(LabError::Domain { x });
        }
        Ok(self.df(x))
    }

    #[inline]
    pub fn df(&self, x: f64) -> f64 {
        if self.critical_points.iter().any(|c| c.location == x) {
            return 0.0;
        }
        match &self.kind {
            MapKind::Logistic { a } => a * (1.0 - 2.0 * x),
            MapKind::CubicBimodal { a } => 3.0 * a * x * x + (1.0 - a),
            MapKind::Piecewise { pieces } => piece_for(pieces, x).deriv(x),
        }
    }

    /// Clamps a roundoff excursion back into the phase space.
    pub fn clamp(&self, x: f64) -> f64 {
        if self.in_domain(x) {
            return x;
        }
        let mut best = self.domain[0].lo;
        let mut dist = f64::INFINITY;
        for d in &self.domain {
            for e in [d.lo, d.hi] {
                if (e - x).abs() < dist {
                    dist = (e - x).abs();
                    best = e;
                }
            }
        }
        best
    }

    /// Index of the lap containing `x`; points on a turning point belong to
    /// the lap on their left.
    pub fn lap_index(&self, x: f64) -> Option<usize> {
        self.laps.iter().position(|l| l.contains(x))
    }

    /// `f(J)` computed from endpoints and interior turning points.
    pub fn image(&self, j: &Interval) -> Interval {
        let mut img = Interval::spanning(self.f(j.lo), self.f(j.hi));
        for &t in &self.extrema {
            if j.contains_open(t) {
                img = img.include(self.f(t));
            }
        }
        img
    }

    /// `f^n(J)` via repeated exact images.
    pub fn image_n(&self, j: &Interval, n: usize) -> Interval {
        let mut img = *j;
        for _ in 0..n {
            img = self.image(&img);
        }
        img
    }

    /// Whether `J°` contains a turning point.
    pub fn has_turning_point(&self, j: &Interval) -> bool {
        self.extrema.iter().any(|&t| j.contains_open(t))
    }

    /// Whether `f^n` is monotone on `J`, i.e. no image `f^k J`, `k < n`,
    /// holds a turning point in its interior.
    pub fn is_monotone_n(&self, j: &Interval, n: usize) -> bool {
        let mut img = *j;
        for k in 0..n {
            if self.has_turning_point(&img) {
                return false;
            }
            if k + 1 < n {
                img = self.image(&img);
            }
        }
        true
    }

    /// The point of lap `lap` mapped to `y`, if any.
    pub fn lap_preimage(&self, lap: usize, y: f64) -> Option<f64> {
        let l = self.laps[lap];
        let (fl, fr) = (self.f(l.lo), self.f(l.hi));
        let (ymin, ymax) = if fl <= fr { (fl, fr) } else { (fr, fl) };
        if y < ymin || y > ymax {
            return None;
        }
        if let MapKind::Logistic { a } = self.kind {
            let t = (4.0 * y / a).min(1.0);
            let s = (1.0 - t).max(0.0).sqrt();
            let left = 0.5 * t / (1.0 + s);
            let x = if l.hi <= 0.5 { left } else { 1.0 - left };
            let x = x.clamp(l.lo, l.hi);
            return Some(self.polish_preimage(l, x, y));
        }
        Some(bisect_monotone(|x| self.f(x), l.lo, l.hi, y))
    }

    fn polish_preimage(&self, lap: Interval, x: f64, y: f64) -> f64 {
        let d = self.df(x);
        if d.abs() < 1e-3 {
            return x;
        }
        let z = (x - (self.f(x) - y) / d).clamp(lap.lo, lap.hi);
        if (self.f(z) - y).abs() <= (self.f(x) - y).abs() {
            z
        } else {
            x
        }
    }

    /// All points mapped to `y`, in increasing order.
    pub fn preimages(&self, y: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 0..self.laps.len() {
            if let Some(x) = self.lap_preimage(k, y) {
                if out.last().map_or(true, |&p: &f64| p != x) {
                    out.push(x);
                }
            }
        }
        out
    }

    /// The extremum declared at `c`, if any.
    pub fn extremum_at(&self, c: f64) -> Option<&CriticalPoint> {
        self.critical_points.iter().find(|cp| cp.location == c && cp.is_extremum())
    }

    /// Local involution `tau` at extremum `c`: `f(tau x) = f(x)`,
    /// `tau(tau x) = x`.
    pub fn involution(&self, c: &CriticalPoint, x: f64) -> Result<f64> {
        if !c.is_extremum() {
            return Err(LabError::NotExtremum(c.location));
        }
        if (x - c.location).abs() > self.eta {
            return Err(LabError::Precondition(format!(
                "{x} lies outside the eta-neighbourhood of {}",
                c.location
            )));
        }
        Ok(self.tau(c.location, x))
    }

    /// Involution without the neighbourhood check; points too far from `c`
    /// to have a partner saturate at the far end of the adjacent lap.
    pub fn tau(&self, c: f64, x: f64) -> f64 {
        if x == c {
            return c;
        }
        if let MapKind::Logistic { .. } = self.kind {
            return 2.0 * c - x;
        }
        let Some(k) = self.laps.iter().position(|l| l.hi == c) else {
            return x;
        };
        let other = if x < c { k + 1 } else { k };
        let target = self.f(x);
        match self.lap_preimage(other, target) {
            Some(y) => y,
            None => {
                let l = self.laps[other];
                if x < c {
                    l.hi
                } else {
                    l.lo
                }
            }
        }
    }

    /// `f^n(x)`.
    #[inline]
    pub fn iterate_n(&self, mut x: f64, n: usize) -> f64 {
        for _ in 0..n {
            x = self.f(x);
        }
        x
    }

    /// Runs the invariant checks and reports measured values.
    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();

        let mut worst_excess: f64 = 0.0;
        for comp in &self.domain {
            let img = self.image(comp);
            let mut covered = false;
            for d in &self.domain {
                if d.contains_interval(&img, EPS_NUM) {
                    covered = true;
                }
            }
            if !covered {
                let excess = self
                    .domain
                    .iter()
                    .map(|d| (d.lo - img.lo).max(img.hi - d.hi).max(0.0))
                    .fold(f64::INFINITY, f64::min);
                worst_excess = worst_excess.max(excess.max(EPS_NUM * 2.0));
            }
        }
        checks.push(Check {
            name: "invariance f(M) ⊆ M".into(),
            passed: worst_excess == 0.0,
            measured: worst_excess,
            detail: self
                .domain
                .iter()
                .map(|d| {
                    let i = self.image(d);
                    format!("f([{}, {}]) = [{}, {}]", d.lo, d.hi, i.lo, i.hi)
                })
                .collect::<Vec<_>>()
                .join("; "),
        });

        let mut worst_bd: f64 = 0.0;
        let mut bd_detail = Vec::new();
        for d in &self.domain {
            for e in [d.lo, d.hi] {
                let y = self.f(e);
                let dist = self
                    .domain
                    .iter()
                    .flat_map(|b| [b.lo, b.hi])
                    .map(|b| (b - y).abs())
                    .fold(f64::INFINITY, f64::min);
                worst_bd = worst_bd.max(dist);
                bd_detail.push(format!("f({e}) = {y}"));
            }
        }
        checks.push(Check {
            name: "boundary convention f(∂M) ⊆ ∂M".into(),
            passed: worst_bd <= EPS_NUM,
            measured: worst_bd,
            detail: bd_detail.join("; "),
        });

        for cp in &self.critical_points {
            let c = cp.location;
            let raw = match &self.kind {
                MapKind::Logistic { a } => a * (1.0 - 2.0 * c),
                MapKind::CubicBimodal { a } => 3.0 * a * c * c + (1.0 - a),
                MapKind::Piecewise { pieces } => piece_for(pieces, c).deriv(c),
            };
            checks.push(Check {
                name: format!("derivative vanishes at {c}"),
                passed: raw.abs() <= 1e-9,
                measured: raw.abs(),
                detail: String::new(),
            });
            let (sl, sr) = self.exponent_slopes(c);
            let worst = (sl - cp.exponent).abs().max((sr - cp.exponent).abs());
            checks.push(Check {
                name: format!("non-flatness exponent at {c}"),
                passed: worst <= EXPONENT_TOL,
                measured: 0.5 * (sl + sr),
                detail: format!("declared {}, left slope {sl}, right slope {sr}", cp.exponent),
            });
            let kind_ok = match cp.kind {
                CriticalKind::Extremum => cp.sign_left == cp.sign_right,
                CriticalKind::Inflection => cp.sign_left == -cp.sign_right,
            };
            checks.push(Check {
                name: format!("critical kind at {c}"),
                passed: kind_ok && cp.sign_left != 0,
                measured: f64::from(cp.sign_left * cp.sign_right),
                detail: format!("{:?}", cp.kind),
            });
        }

        let mut eta_ok = true;
        for w in self.critical_points.windows(2) {
            if w[1].location - w[0].location <= 2.0 * self.eta {
                eta_ok = false;
            }
        }
        for cp in &self.critical_points {
            let nb = Interval { lo: cp.location - self.eta, hi: cp.location + self.eta };
            if !self.in_interior(&nb) {
                eta_ok = false;
            }
        }
        checks.push(Check {
            name: "disjoint eta-neighbourhoods inside M°".into(),
            passed: eta_ok,
            measured: self.eta,
            detail: String::new(),
        });

        if let MapKind::Piecewise { pieces } = &self.kind {
            let mut jump: f64 = 0.0;
            for w in pieces.windows(2) {
                if w[0].hi == w[1].lo {
                    let x = w[0].hi;
                    jump = jump
                        .max((w[0].eval(x) - w[1].eval(x)).abs())
                        .max((w[0].deriv(x) - w[1].deriv(x)).abs());
                }
            }
            checks.push(Check {
                name: "C¹ across breakpoints".into(),
                passed: jump <= C1_TOL,
                measured: jump,
                detail: String::new(),
            });
            let undeclared = self.undeclared_turning_points();
            checks.push(Check {
                name: "all turning points declared".into(),
                passed: undeclared.is_empty(),
                measured: undeclared.len() as f64,
                detail: format!("{undeclared:?}"),
            });
        }

        let passed = checks.iter().all(|c| c.passed);
        ValidationReport { passed, eta: self.eta, xi: self.xi, xi_fallback: self.xi_fallback, checks }
    }

    /// Log-log slopes of |f(x) - f(c)| against |x - c| over [1e-5, 1e-2].
    fn exponent_slopes(&self, c: f64) -> (f64, f64) {
        let fc = self.f(c);
        let mut slopes = [0.0; 2];
        for (k, side) in [-1.0f64, 1.0].into_iter().enumerate() {
            let mut pts = Vec::new();
            for i in 0..=24 {
                let s = 10f64.powf(-5.0 + 3.0 * i as f64 / 24.0);
                let x = c + side * s;
                if !self.in_domain(x) {
                    continue;
                }
                let dy = (self.f(x) - fc).abs();
                if dy > 0.0 {
                    pts.push((s.ln(), dy.ln()));
                }
            }
            slopes[k] = regression_slope(&pts);
        }
        (slopes[0], slopes[1])
    }

    fn undeclared_turning_points(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for comp in &self.domain {
            let n = 4096;
            let h = comp.len() / n as f64;
            let mut prev = self.df(comp.lo + 0.5 * h);
            for i in 1..n {
                let x = comp.lo + (i as f64 + 0.5) * h;
                let d = self.df(x);
                if d * prev < 0.0 {
                    let lo = x - h;
                    let declared = self.extrema.iter().any(|&t| t >= lo - h && t <= x + h);
                    if !declared {
                        out.push(x - 0.5 * h);
                    }
                }
                if d != 0.0 {
                    prev = d;
                }
            }
        }
        out
    }
}

fn regression_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn covered_by_pieces(pieces: &[Piece], comp: &Interval) -> bool {
    let mut reach = comp.lo;
    for p in pieces {
        if p.lo <= reach && p.hi > reach {
            reach = p.hi;
        }
    }
    reach >= comp.hi
}

#[inline]
fn piece_for(pieces: &[Piece], x: f64) -> &Piece {
    pieces
        .iter()
        .find(|p| p.lo <= x && x <= p.hi)
        .unwrap_or_else(|| if x < pieces[0].lo { &pieces[0] } else { pieces.last().unwrap() })
}

#[inline]
fn eval_kind(kind: &MapKind, x: f64) -> f64 {
    match kind {
        MapKind::Logistic { a } => a * x * (1.0 - x),
        MapKind::CubicBimodal { a } => x * (a * x * x + (1.0 - a)),
        MapKind::Piecewise { pieces } => piece_for(pieces, x).eval(x),
    }
}

/// Solves `g(x) = y` for `g` monotone on `[lo, hi]` with `y` between the end
/// values, to full double precision.
pub fn bisect_monotone(g: impl Fn(f64) -> f64, lo: f64, hi: f64, y: f64) -> f64 {
    let (glo, ghi) = (g(lo), g(hi));
    if glo == y {
        return lo;
    }
    if ghi == y {
        return hi;
    }
    let increasing = ghi > glo;
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == y {
            return m;
        }
        if (gm < y) == increasing {
            a = m;
        } else {
            b = m;
        }
    }
    if (g(a) - y).abs() <= (g(b) - y).abs() {
        a
    } else {
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub eta: f64,
    pub xi: f64,
    pub xi_fallback: bool,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let u = MapSpec::logistic(4.0).unwrap();
        assert_eq!(u.eval(0.5).unwrap(), 1.0);
        assert_eq!(u.eval(0.0).unwrap(), 0.0);
        let m = MapSpec::logistic(3.2).unwrap();
        assert!((m.eval(0.5).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(u.eval(1.5), Err(LabError::Domain { .. })));
    }

    #[test]
    fn derivative_examples() {
        let u = MapSpec::logistic(4.0).unwrap();
        assert_eq!(u.derivative(0.5).unwrap(), 0.0);
        assert_eq!(u.derivative(0.0).unwrap(), 4.0);
        let m = MapSpec::logistic(3.2).unwrap();
        assert!((m.derivative(0.25).unwrap() - 1.6).abs() < 1e-15);
        let cb = MapSpec::cubic_bimodal(3.0).unwrap();
        for cp in cb.critical_points() {
            assert_eq!(cb.derivative(cp.location).unwrap(), 0.0);
        }
    }

    #[test]
    fn involution_examples() {
        let u = MapSpec::logistic(4.0).unwrap();
        let c = u.critical_points()[0];
        assert!((u.involution(&c, 0.4).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(u.involution(&c, 0.5).unwrap(), 0.5);
        assert!(u.involution(&c, 0.05).is_err());

        let cb = MapSpec::cubic_bimodal(3.0).unwrap();
        let left = cb.critical_points()[0];
        let x = left.location + 0.01;
        let y = cb.involution(&left, x).unwrap();
        assert!(y < left.location);
        assert!((cb.f(y) - cb.f(x)).abs() < 1e-9);
        assert!((cb.involution(&left, y).unwrap() - x).abs() < 1e-9);

        let cube = MapSpec::from_family(&FamilyHandle { family: "cube".into(), params: vec![] }).unwrap();
        let infl = cube.critical_points()[0];
        assert!(matches!(cube.involution(&infl, 0.01), Err(LabError::NotExtremum(_))));
    }

    #[test]
    fn validate_examples() {
        let u = MapSpec::logistic(4.0).unwrap();
        let rep = u.validate();
        assert!(rep.passed, "{rep:#?}");
        let exp = rep.checks.iter().find(|c| c.name.starts_with("non-flatness")).unwrap();
        assert!((exp.measured - 2.0).abs() < 0.01);

        let bad = MapSpec::logistic(4.2).unwrap().validate();
        assert!(!bad.passed);
        let names: Vec<_> = bad.failed().map(|c| c.name.clone()).collect();
        assert!(names.iter().any(|n| n.starts_with("invariance")), "{names:?}");

        let shifted = MapSpec::from_json(
            r#"{"pieces":[{"lo":0,"hi":1,"coeffs":[0.3,2.4,-2.4]}],"domain":[[0,1]],
                "critical_points":[{"location":0.5,"kind":"extremum","exponent":2}]}"#,
        )
        .unwrap()
        .validate();
        let names: Vec<_> = shifted.failed().map(|c| c.name.clone()).collect();
        assert!(names.iter().any(|n| n.starts_with("boundary")), "{names:?}");
    }

    #[test]
    fn families_validate() {
        for a in [2.0, 3.2, 3.5699456718709449, 3.83, 4.0] {
            assert!(MapSpec::logistic(a).unwrap().validate().passed, "logistic {a}");
        }
        for a in [2.0, 3.0, 4.0] {
            let r = MapSpec::cubic_bimodal(a).unwrap().validate();
            assert!(r.passed, "cubic {a}: {r:#?}");
        }
        let cube = MapSpec::from_family(&FamilyHandle { family: "cube".into(), params: vec![] }).unwrap();
        assert!(cube.validate().passed);
    }

    #[test]
    fn images_and_preimages() {
        let u = MapSpec::logistic(4.0).unwrap();
        let img = u.image(&Interval::spanning(0.4, 0.6));
        assert!((img.lo - 0.96).abs() < 1e-15 && img.hi == 1.0);
        let pre = u.preimages(0.7);
        assert_eq!(pre.len(), 2);
        for p in pre {
            assert!((u.f(p) - 0.7).abs() < 1e-15);
        }
        let cb = MapSpec::cubic_bimodal(4.0).unwrap();
        let pre = cb.preimages(0.3);
        assert_eq!(pre.len(), 3);
        for p in pre {
            assert!((cb.f(p) - 0.3).abs() < 1e-14);
        }
    }

    #[test]
    fn eta_and_xi() {
        let u = MapSpec::logistic(4.0).unwrap();
        assert!((u.eta() - 0.5 / 3.0).abs() < 1e-15);
        assert!(u.xi() > 0.0 && !u.xi_fallback());
        let m = MapSpec::logistic(3.2).unwrap();
        assert!(m.xi() > 0.0 && m.xi_fallback());
    }

    #[test]
    fn malformed_json() {
        assert!(matches!(MapSpec::from_json("{"), Err(LabError::Parse(_))));
        assert!(matches!(MapSpec::from_json(r#"{"family":"nope","params":[1]}"#), Err(LabError::Parse(_))));
    }
}
