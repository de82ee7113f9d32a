//! Offer/confirmation wave bookkeeping on a finite labeled mode basis.
//!
//! A source emits, per mode, a retarded offer wave and an advanced
//! counterpart that is exactly out of phase with it. An absorber answers an
//! offer component with a confirmation wave whose advanced part is the
//! complex conjugate of the offer amplitude. Superposing everything, the
//! field cancels outside the emitter–absorber worldline whenever the
//! absorber set is complete; an incomplete set leaves an uncancelled
//! pre-emission residual (the emitter advanced-wave remnant). The squared
//! magnitude of each confirmed offer component is the weight of the
//! corresponding incipient transaction.
//!
//! Everything here is pure value arithmetic: no geometry, no time indices
//! beyond the three-way support partition, no mutation after construction.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Absolute tolerance for amplitude cancellation checks. All amplitudes are
/// unit-scale, so double precision leaves several orders of headroom.
pub const CANCEL_TOL: f64 = 1e-12;

/// Absolute tolerance on `Σ|ψ|² − 1` for a normalized emitter state.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum WaveError {
    /// The emitter state's squared magnitudes do not sum to 1.
    #[error("emitter state is not normalized: Σ|ψ|² = {norm_sq}")]
    NonNormalizedState { norm_sq: f64 },
    /// A confirmation was requested for a component that is not a retarded
    /// offer.
    #[error("component is not a retarded offer ({kind:?}, {direction:?})")]
    NotAnOffer {
        kind: WaveKind,
        direction: Direction,
    },
    /// A confirmation answers no offer component.
    #[error("confirmation on mode {mode} answers no offer component")]
    OrphanConfirmation { mode: ModeLabel },
}

// ---------------------------------------------------------------------------
// Amplitude
// ---------------------------------------------------------------------------

/// A complex wave amplitude. Finite by construction; conjugation and
/// negation are bit-exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Amplitude {
    re: f64,
    im: f64,
}

impl Amplitude {
    pub const ZERO: Amplitude = Amplitude { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Amplitude {
        assert!(re.is_finite() && im.is_finite(), "non-finite amplitude");
        Amplitude { re, im }
    }

    pub fn from_re(re: f64) -> Amplitude {
        Amplitude::new(re, 0.0)
    }

    pub fn re(&self) -> f64 {
        self.re
    }

    pub fn im(&self) -> f64 {
        self.im
    }

    /// Complex conjugate (same floating-point bits on the real part).
    pub fn conj(&self) -> Amplitude {
        Amplitude {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Whether the magnitude is within `CANCEL_TOL` of zero.
    pub fn is_cancelled(&self) -> bool {
        self.norm() <= CANCEL_TOL
    }

    /// Total order on (re, im); used to make summation order canonical.
    fn canonical_cmp(&self, other: &Amplitude) -> std::cmp::Ordering {
        self.re
            .total_cmp(&other.re)
            .then(self.im.total_cmp(&other.im))
    }
}

impl std::ops::Add for Amplitude {
    type Output = Amplitude;
    fn add(self, rhs: Amplitude) -> Amplitude {
        Amplitude::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl std::ops::Sub for Amplitude {
    type Output = Amplitude;
    fn sub(self, rhs: Amplitude) -> Amplitude {
        Amplitude::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl std::ops::Neg for Amplitude {
    type Output = Amplitude;
    fn neg(self) -> Amplitude {
        Amplitude {
            re: -self.re,
            im: -self.im,
        }
    }
}

impl fmt::Display for Amplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im < 0.0 {
            write!(f, "{}-{}i", self.re, -self.im)
        } else {
            write!(f, "{}+{}i", self.re, self.im)
        }
    }
}

// ---------------------------------------------------------------------------
// Labels and component coordinates
// ---------------------------------------------------------------------------

/// Opaque mode identifier, e.g. "L" or "R". Unique within a scenario basis.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeLabel(String);

impl ModeLabel {
    pub fn new(name: impl Into<String>) -> ModeLabel {
        let name = name.into();
        assert!(!name.is_empty(), "empty mode label");
        ModeLabel(name)
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identifier of an absorbing detector.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbsorberId(String);

impl AbsorberId {
    pub fn new(name: impl Into<String>) -> AbsorberId {
        let name = name.into();
        assert!(!name.is_empty(), "empty absorber id");
        AbsorberId(name)
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AbsorberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The entity a wave component was emitted by.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    Emitter,
    Absorber(AbsorberId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WaveKind {
    Offer,
    Confirmation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    /// Propagates toward increasing time index.
    Retarded,
    /// Propagates toward decreasing time index.
    Advanced,
}

/// Temporal support of a component relative to the emitter–absorber pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Support {
    /// Before the emission event. Holds advanced components only.
    PreEmission,
    /// The worldline between emitter and absorber.
    ConnectingWorldline,
    /// Beyond the absorption event. Holds retarded components only.
    PostAbsorption,
}

/// The coordinates along which amplitudes superpose linearly.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldCoord {
    pub kind: WaveKind,
    pub direction: Direction,
    pub mode: ModeLabel,
    pub support: Support,
}

// ---------------------------------------------------------------------------
// Wave components and sets
// ---------------------------------------------------------------------------

/// One labeled piece of field.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveComponent {
    pub kind: WaveKind,
    pub direction: Direction,
    pub mode: ModeLabel,
    pub amplitude: Amplitude,
    pub origin: Origin,
    pub support: Support,
}

impl WaveComponent {
    pub fn new(
        kind: WaveKind,
        direction: Direction,
        mode: ModeLabel,
        amplitude: Amplitude,
        origin: Origin,
        support: Support,
    ) -> WaveComponent {
        assert!(
            amplitude.norm_sqr() <= 1.0 + CANCEL_TOL,
            "single-component magnitude² exceeds 1: {}",
            amplitude.norm_sqr()
        );
        match support {
            Support::PreEmission => {
                assert_eq!(direction, Direction::Advanced, "pre-emission support holds advanced components only")
            }
            Support::PostAbsorption => {
                assert_eq!(direction, Direction::Retarded, "post-absorption support holds retarded components only")
            }
            Support::ConnectingWorldline => {}
        }
        WaveComponent {
            kind,
            direction,
            mode,
            amplitude,
            origin,
            support,
        }
    }

    pub fn coord(&self) -> FieldCoord {
        FieldCoord {
            kind: self.kind,
            direction: self.direction,
            mode: self.mode.clone(),
            support: self.support,
        }
    }
}

/// A multiset of wave components.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WaveSet {
    components: Vec<WaveComponent>,
}

impl WaveSet {
    pub fn new() -> WaveSet {
        WaveSet::default()
    }

    pub fn from_components(components: Vec<WaveComponent>) -> WaveSet {
        WaveSet { components }
    }

    pub fn push(&mut self, component: WaveComponent) {
        self.components.push(component);
    }

    pub fn extend(&mut self, other: WaveSet) {
        self.components.extend(other.components);
    }

    /// Multiset union.
    pub fn union(&self, other: &WaveSet) -> WaveSet {
        let mut all = self.components.clone();
        all.extend(other.components.iter().cloned());
        WaveSet { components: all }
    }

    pub fn iter(&self) -> impl Iterator<Item = &WaveComponent> {
        self.components.iter()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// The retarded offer component on `mode` along the connecting
    /// worldline, if present.
    pub fn retarded_connecting_offer(&self, mode: &ModeLabel) -> Option<&WaveComponent> {
        self.components.iter().find(|c| {
            c.kind == WaveKind::Offer
                && c.direction == Direction::Retarded
                && c.support == Support::ConnectingWorldline
                && &c.mode == mode
        })
    }

    /// Advanced confirmation components along the connecting worldline
    /// (the parts that answer offers).
    pub fn answering_confirmations(&self) -> impl Iterator<Item = &WaveComponent> {
        self.components.iter().filter(|c| {
            c.kind == WaveKind::Confirmation
                && c.direction == Direction::Advanced
                && c.support == Support::ConnectingWorldline
        })
    }
}

impl IntoIterator for WaveSet {
    type Item = WaveComponent;
    type IntoIter = std::vec::IntoIter<WaveComponent>;
    fn into_iter(self) -> Self::IntoIter {
        self.components.into_iter()
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Emit the offer field for a normalized emitter state.
///
/// Per mode with amplitude ψ this produces a retarded offer ψ on the
/// connecting worldline and an advanced offer −ψ* on pre-emission support,
/// exactly out of phase with any confirmation that may later arrive there.
pub fn emit_offer(state: &BTreeMap<ModeLabel, Amplitude>) -> Result<WaveSet, WaveError> {
    let norm_sq: f64 = state.values().map(Amplitude::norm_sqr).sum();
    if (norm_sq - 1.0).abs() > NORM_TOL {
        return Err(WaveError::NonNormalizedState { norm_sq });
    }
    let mut set = WaveSet::new();
    for (mode, amp) in state {
        set.push(WaveComponent::new(
            WaveKind::Offer,
            Direction::Retarded,
            mode.clone(),
            *amp,
            Origin::Emitter,
            Support::ConnectingWorldline,
        ));
        set.push(WaveComponent::new(
            WaveKind::Offer,
            Direction::Advanced,
            mode.clone(),
            -amp.conj(),
            Origin::Emitter,
            Support::PreEmission,
        ));
    }
    Ok(set)
}

/// Absorb a retarded offer component and answer it with a full-strength
/// confirmation wave.
///
/// The returned set carries the complete absorption bookkeeping:
/// the advanced confirmation ψ* on the connecting worldline, its
/// continuation backward past the emitter (pre-emission support), the
/// retarded confirmation −ψ beyond the absorber, and the absorbed offer's
/// own continuation ψ there, which the retarded confirmation cancels
/// exactly.
pub fn respond_confirmation(
    offer_component: &WaveComponent,
    absorber_id: &AbsorberId,
) -> Result<WaveSet, WaveError> {
    if offer_component.kind != WaveKind::Offer || offer_component.direction != Direction::Retarded
    {
        return Err(WaveError::NotAnOffer {
            kind: offer_component.kind,
            direction: offer_component.direction,
        });
    }
    let psi = offer_component.amplitude;
    let mode = offer_component.mode.clone();
    let origin = Origin::Absorber(absorber_id.clone());
    let mut set = WaveSet::new();
    set.push(WaveComponent::new(
        WaveKind::Confirmation,
        Direction::Advanced,
        mode.clone(),
        psi.conj(),
        origin.clone(),
        Support::ConnectingWorldline,
    ));
    set.push(WaveComponent::new(
        WaveKind::Confirmation,
        Direction::Advanced,
        mode.clone(),
        psi.conj(),
        origin.clone(),
        Support::PreEmission,
    ));
    set.push(WaveComponent::new(
        WaveKind::Confirmation,
        Direction::Retarded,
        mode.clone(),
        -psi,
        origin,
        Support::PostAbsorption,
    ));
    set.push(WaveComponent::new(
        WaveKind::Offer,
        Direction::Retarded,
        mode,
        psi,
        offer_component.origin.clone(),
        Support::PostAbsorption,
    ));
    Ok(set)
}

/// Componentwise complex sum over (kind, direction, mode, support).
///
/// The result is invariant under permutation of the input multiset: within
/// each coordinate the amplitudes are summed in a canonical order.
pub fn superpose(waves: &WaveSet) -> BTreeMap<FieldCoord, Amplitude> {
    let mut buckets: BTreeMap<FieldCoord, Vec<Amplitude>> = BTreeMap::new();
    for component in waves.iter() {
        buckets
            .entry(component.coord())
            .or_default()
            .push(component.amplitude);
    }
    buckets
        .into_iter()
        .map(|(coord, mut amps)| {
            amps.sort_by(|a, b| a.canonical_cmp(b));
            let sum = amps
                .into_iter()
                .fold(Amplitude::ZERO, |acc, a| acc + a);
            (coord, sum)
        })
        .collect()
}

/// Total field per (support, mode): amplitudes summed across kinds and
/// directions, since waves interfere wherever they coincide regardless of
/// which entity emitted them. Permutation-invariant like [`superpose`].
pub fn residual_field(waves: &WaveSet) -> BTreeMap<(Support, ModeLabel), Amplitude> {
    let mut buckets: BTreeMap<(Support, ModeLabel), Vec<Amplitude>> = BTreeMap::new();
    for component in waves.iter() {
        buckets
            .entry((component.support, component.mode.clone()))
            .or_default()
            .push(component.amplitude);
    }
    buckets
        .into_iter()
        .map(|(key, mut amps)| {
            amps.sort_by(|a, b| a.canonical_cmp(b));
            let sum = amps
                .into_iter()
                .fold(Amplitude::ZERO, |acc, a| acc + a);
            (key, sum)
        })
        .collect()
}

/// The uncancelled pre-emission residual after superposing an offer field
/// with its confirmations. Zero (empty) exactly when every offer mode has a
/// full-strength confirmation.
pub fn emitter_advanced_remnant(
    offer: &WaveSet,
    confirmations: &WaveSet,
) -> BTreeMap<ModeLabel, Amplitude> {
    residual_field(&offer.union(confirmations))
        .into_iter()
        .filter(|((support, _), amp)| *support == Support::PreEmission && !amp.is_cancelled())
        .map(|((_, mode), amp)| (mode, amp))
        .collect()
}

/// Weight of one incipient transaction: the squared magnitude of the
/// confirmed offer component's amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct TransactionWeight {
    pub mode: ModeLabel,
    pub weight: f64,
}

/// The transaction weights of a configuration plus the probability that no
/// transaction forms at all.
#[derive(Clone, Debug, PartialEq)]
pub struct TransactionWeights {
    pub per_mode: Vec<TransactionWeight>,
    pub null_probability: f64,
}

impl TransactionWeights {
    pub fn weight_of(&self, mode: &ModeLabel) -> Option<f64> {
        self.per_mode
            .iter()
            .find(|w| &w.mode == mode)
            .map(|w| w.weight)
    }

    pub fn total(&self) -> f64 {
        self.per_mode.iter().map(|w| w.weight).sum()
    }
}

/// Compute the weight of each confirmed mode and the null probability.
///
/// A mode counts as confirmed when at least one advanced confirmation
/// answers its retarded offer component. Weights are clamped to [0, 1];
/// the null probability is `1 − Σ weights` clamped to 0 from below.
pub fn transaction_weights(
    offer: &WaveSet,
    confirmations: &WaveSet,
) -> Result<TransactionWeights, WaveError> {
    let mut confirmed: Vec<ModeLabel> = Vec::new();
    for cw in confirmations.answering_confirmations() {
        if offer.retarded_connecting_offer(&cw.mode).is_none() {
            return Err(WaveError::OrphanConfirmation {
                mode: cw.mode.clone(),
            });
        }
        if !confirmed.contains(&cw.mode) {
            confirmed.push(cw.mode.clone());
        }
    }
    confirmed.sort();
    let per_mode: Vec<TransactionWeight> = confirmed
        .into_iter()
        .map(|mode| {
            let amp = offer
                .retarded_connecting_offer(&mode)
                .expect("confirmed mode has an offer component")
                .amplitude;
            TransactionWeight {
                mode,
                weight: amp.norm_sqr().clamp(0.0, 1.0),
            }
        })
        .collect();
    let total: f64 = per_mode.iter().map(|w| w.weight).sum();
    let null_probability = 1.0 - total;
    debug_assert!(null_probability >= -NORM_TOL, "weights exceed unity: {total}");
    Ok(TransactionWeights {
        per_mode,
        null_probability: null_probability.max(0.0),
    })
}
