//! Cohen's kappa and the prevalence/bias diagnostics over 2x2 agreement tables.
//!
//! Every statistic is computed exactly as a ratio of the integer cell counts.
//! Conversion to `f64` happens only when an [`AgreementReport`] is assembled,
//! and display rounding (two decimals, half away from zero) is done on the
//! exact value so that printed figures never suffer from binary representation
//! error.
//!
//! Cell layout, with reviewer 1 along the columns and reviewer 2 along the rows:
//!
//! ```text
//!                    reviewer 1
//!                  Include  Exclude
//! reviewer 2 Incl     a        b
//!            Excl     c        d
//! ```

use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact rational used for all internal arithmetic.
pub type Exact = Ratio<i128>;

/// Observed agreement at or above which a low kappa is considered paradoxical.
pub const PARADOX_MIN_OBSERVED: (i128, i128) = (3, 4);
/// Kappa strictly below this value (the start of the Moderate band) can be paradoxical.
pub const PARADOX_MAX_KAPPA: (i128, i128) = (81, 200);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgreementError {
    #[error("no verdict pairs to tabulate")]
    EmptyInput,
    #[error("contingency table has no observations")]
    EmptyTable,
    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    Domain {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("kappa is undefined: all observations fall in a single cell")]
    Degenerate,
}

/// A screening verdict on one study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Include,
    Exclude,
}

impl Verdict {
    pub fn flipped(self) -> Self {
        match self {
            Verdict::Include => Verdict::Exclude,
            Verdict::Exclude => Verdict::Include,
        }
    }

    /// `Y`/`N`, the form used on selection forms.
    pub fn as_yn(self) -> &'static str {
        match self {
            Verdict::Include => "Y",
            Verdict::Exclude => "N",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "y" | "yes" | "i" | "include" | "included" => Some(Verdict::Include),
            "n" | "no" | "e" | "exclude" | "excluded" => Some(Verdict::Exclude),
            _ => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Include => "include",
            Verdict::Exclude => "exclude",
        })
    }
}

#[derive(Deserialize)]
struct RawTable {
    a: u64,
    b: u64,
    c: u64,
    d: u64,
}

/// Agreement counts between two reviewers. Always holds at least one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct ContingencyTable {
    a: u64,
    b: u64,
    c: u64,
    d: u64,
}

impl TryFrom<RawTable> for ContingencyTable {
    type Error = AgreementError;

    fn try_from(raw: RawTable) -> Result<Self, Self::Error> {
        ContingencyTable::new(raw.a, raw.b, raw.c, raw.d)
    }
}

impl ContingencyTable {
    /// `a`: both include; `b`: reviewer 1 excludes, reviewer 2 includes;
    /// `c`: reviewer 1 includes, reviewer 2 excludes; `d`: both exclude.
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Result<Self, AgreementError> {
        if a + b + c + d == 0 {
            return Err(AgreementError::EmptyTable);
        }
        Ok(Self { a, b, c, d })
    }

    pub fn a(&self) -> u64 {
        self.a
    }
    pub fn b(&self) -> u64 {
        self.b
    }
    pub fn c(&self) -> u64 {
        self.c
    }
    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    pub fn cells(&self) -> [u64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    fn p(&self, cell: u64) -> Exact {
        Exact::new(cell as i128, self.total() as i128)
    }

    /// Exact cell proportions `P(a)..P(d)`; they sum to one.
    pub fn proportions(&self) -> [Exact; 4] {
        [self.p(self.a), self.p(self.b), self.p(self.c), self.p(self.d)]
    }

    /// Swap the reviewers (b and c trade places).
    pub fn transposed(&self) -> Self {
        Self {
            a: self.a,
            b: self.c,
            c: self.b,
            d: self.d,
        }
    }

    /// Swap the categories (include and exclude trade places).
    pub fn category_swapped(&self) -> Self {
        Self {
            a: self.d,
            b: self.c,
            c: self.b,
            d: self.a,
        }
    }

    /// Count a single (reviewer 1, reviewer 2) verdict pair into the table.
    fn add(&mut self, first: Verdict, second: Verdict) {
        match (first, second) {
            (Verdict::Include, Verdict::Include) => self.a += 1,
            (Verdict::Exclude, Verdict::Include) => self.b += 1,
            (Verdict::Include, Verdict::Exclude) => self.c += 1,
            (Verdict::Exclude, Verdict::Exclude) => self.d += 1,
        }
    }
}

impl fmt::Display for ContingencyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.a, self.b, self.c, self.d)
    }
}

/// Build the table from (reviewer 1, reviewer 2) verdict pairs.
pub fn tabulate<I>(pairs: I) -> Result<ContingencyTable, AgreementError>
where
    I: IntoIterator<Item = (Verdict, Verdict)>,
{
    let mut table = ContingencyTable {
        a: 0,
        b: 0,
        c: 0,
        d: 0,
    };
    for (first, second) in pairs {
        table.add(first, second);
    }
    if table.total() == 0 {
        return Err(AgreementError::EmptyInput);
    }
    Ok(table)
}

/// `p0 = P(a) + P(d)`.
pub fn observed_agreement(t: &ContingencyTable) -> Exact {
    t.p(t.a) + t.p(t.d)
}

/// `pc`, the agreement expected from the two reviewers' marginals alone.
pub fn chance_agreement(t: &ContingencyTable) -> Exact {
    let [pa, pb, pc, pd] = t.proportions();
    let include = (pa + pc) * (pa + pb);
    let exclude = (pb + pd) * (pc + pd);
    include + exclude
}

/// Cohen's kappa, or `None` when chance agreement is one (every observation
/// in a single cell) and the coefficient is undefined.
pub fn cohen_kappa(t: &ContingencyTable) -> Option<Exact> {
    let p0 = observed_agreement(t);
    let pc = chance_agreement(t);
    if pc.is_one() {
        return None;
    }
    Some((p0 - pc) / (Exact::one() - pc))
}

/// Extreme and "normal" kappa attainable at a given observed agreement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaBounds<T = f64> {
    pub max: T,
    pub min: T,
    pub nor: T,
}

/// `k_max = p0^2 / ((1 - p0)^2 + 1)`, `k_min = (p0 - 1)/(p0 + 1)` (zero at
/// `p0 = 1`), `k_nor = 2 p0 - 1`.
pub fn kappa_bounds(p0: Exact) -> Result<KappaBounds<Exact>, AgreementError> {
    let one = Exact::one();
    if p0 < Exact::zero() || p0 > one {
        return Err(AgreementError::Domain {
            name: "p0",
            value: to_f64(&p0),
            lo: 0.0,
            hi: 1.0,
        });
    }
    let gap = one - p0;
    let max = p0 * p0 / (gap * gap + one);
    let min = if p0 == one {
        Exact::zero()
    } else {
        (p0 - one) / (p0 + one)
    };
    let nor = Exact::from_integer(2) * p0 - one;
    Ok(KappaBounds { max, min, nor })
}

/// Asymmetry indices and prevalence proportions.
///
/// `sd` is undefined at perfect agreement and `sa` at zero agreement.
/// `pmm` is `P(d)`, the exclude/exclude agreement cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymmetry<T = f64> {
    pub sd: Option<T>,
    pub sa: Option<T>,
    pub ppp: T,
    pub pmm: T,
}

pub fn asymmetry(t: &ContingencyTable) -> Asymmetry<Exact> {
    let [pa, pb, pc, pd] = t.proportions();
    let p0 = pa + pd;
    let disagreement = Exact::one() - p0;
    let sd = (!disagreement.is_zero()).then(|| (pb - pc) / disagreement);
    let sa = (!p0.is_zero()).then(|| (pa - pd) / p0);
    Asymmetry {
        sd,
        sa,
        ppp: pa,
        pmm: pd,
    }
}

/// Strength-of-agreement bands, ordered from weakest to strongest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementBand {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl fmt::Display for AgreementBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgreementBand::Poor => "Poor",
            AgreementBand::Slight => "Slight",
            AgreementBand::Fair => "Fair",
            AgreementBand::Moderate => "Moderate",
            AgreementBand::Substantial => "Substantial",
            AgreementBand::AlmostPerfect => "Almost Perfect",
        })
    }
}

/// Map kappa onto its band. The published table lists closed two-decimal
/// ranges (0.00-0.20, 0.21-0.40, ...); cuts sit at the midpoints of the gaps
/// so every value in [-1, 1] lands in exactly one band.
pub fn classify(k: f64) -> Result<AgreementBand, AgreementError> {
    if !(-1.0..=1.0).contains(&k) {
        return Err(AgreementError::Domain {
            name: "kappa",
            value: k,
            lo: -1.0,
            hi: 1.0,
        });
    }
    Ok(if k < 0.0 {
        AgreementBand::Poor
    } else if k < 0.205 {
        AgreementBand::Slight
    } else if k < 0.405 {
        AgreementBand::Fair
    } else if k < 0.605 {
        AgreementBand::Moderate
    } else if k < 0.805 {
        AgreementBand::Substantial
    } else {
        AgreementBand::AlmostPerfect
    })
}

/// Kappa for the report: a number, or the degenerate marker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kappa {
    Defined(f64),
    Degenerate,
}

impl Kappa {
    pub fn value(self) -> Option<f64> {
        match self {
            Kappa::Defined(k) => Some(k),
            Kappa::Degenerate => None,
        }
    }
}

/// High observed agreement paired with a low kappa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Paradox {
    pub flagged: bool,
    /// `|k - k_nor|`; large values point to asymmetric prevalence.
    pub deviation: f64,
}

/// Everything needed to interpret one round's kappa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub table: ContingencyTable,
    pub p0: f64,
    pub pc: f64,
    pub kappa: Kappa,
    pub bounds: KappaBounds,
    pub asymmetry: Asymmetry,
    pub band: Option<AgreementBand>,
    pub paradox: Option<Paradox>,
}

fn exact_paradox(t: &ContingencyTable) -> Option<(bool, Exact)> {
    let k = cohen_kappa(t)?;
    let p0 = observed_agreement(t);
    let nor = Exact::from_integer(2) * p0 - Exact::one();
    let (pn, pd) = PARADOX_MIN_OBSERVED;
    let (kn, kd) = PARADOX_MAX_KAPPA;
    let flagged = p0 >= Exact::new(pn, pd) && k < Exact::new(kn, kd);
    Some((flagged, (k - nor).abs()))
}

/// Flag the high-agreement/low-kappa pattern for a populated report.
pub fn paradox_flag(report: &AgreementReport) -> Result<Paradox, AgreementError> {
    let (flagged, deviation) = exact_paradox(&report.table).ok_or(AgreementError::Degenerate)?;
    Ok(Paradox {
        flagged,
        deviation: to_f64(&deviation),
    })
}

/// Compose every statistic for `t` into one report at full precision.
pub fn agreement_report(t: &ContingencyTable) -> AgreementReport {
    let p0 = observed_agreement(t);
    let pc = chance_agreement(t);
    let bounds = kappa_bounds(p0).expect("observed agreement is a proportion");
    let asym = asymmetry(t);
    let kappa = cohen_kappa(t);
    let band = kappa
        .as_ref()
        .map(|k| classify(to_f64(k)).expect("kappa lies in [-1, 1]"));
    let paradox = exact_paradox(t).map(|(flagged, deviation)| Paradox {
        flagged,
        deviation: to_f64(&deviation),
    });
    AgreementReport {
        table: *t,
        p0: to_f64(&p0),
        pc: to_f64(&pc),
        kappa: kappa.map_or(Kappa::Degenerate, |k| Kappa::Defined(to_f64(&k))),
        bounds: KappaBounds {
            max: to_f64(&bounds.max),
            min: to_f64(&bounds.min),
            nor: to_f64(&bounds.nor),
        },
        asymmetry: Asymmetry {
            sd: asym.sd.as_ref().map(to_f64),
            sa: asym.sa.as_ref().map(to_f64),
            ppp: to_f64(&asym.ppp),
            pmm: to_f64(&asym.pmm),
        },
        band,
        paradox,
    }
}

impl AgreementReport {
    /// Two-decimal rendering of the report, rounded from the exact values.
    pub fn display(&self) -> DisplayStats {
        let t = &self.table;
        let p0 = observed_agreement(t);
        let bounds = kappa_bounds(p0).expect("observed agreement is a proportion");
        let asym = asymmetry(t);
        let undef = || UNDEFINED.to_string();
        DisplayStats {
            p0: round2(&p0),
            pc: round2(&chance_agreement(t)),
            k: cohen_kappa(t).map_or_else(undef, |k| round2(&k)),
            k_max: round2(&bounds.max),
            k_min: round2(&bounds.min),
            k_nor: round2(&bounds.nor),
            s_d: asym.sd.map_or_else(undef, |v| round2(&v)),
            s_a: asym.sa.map_or_else(undef, |v| round2(&v)),
            ppp: round2(&asym.ppp),
            pmm: round2(&asym.pmm),
        }
    }
}

/// Placeholder printed for undefined statistics.
pub const UNDEFINED: &str = "undef";

/// Report values as displayed strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayStats {
    pub p0: String,
    pub pc: String,
    pub k: String,
    pub k_max: String,
    pub k_min: String,
    pub k_nor: String,
    pub s_d: String,
    pub s_a: String,
    pub ppp: String,
    pub pmm: String,
}

pub fn to_f64(r: &Exact) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Round to two decimals, ties away from zero, and format as `-0.07`, `1.00`.
pub fn round2(r: &Exact) -> String {
    let scaled = r.abs() * Exact::from_integer(100) + Exact::new(1, 2);
    let hundredths = scaled.floor().to_integer();
    let sign = if r.is_negative() && hundredths != 0 {
        "-"
    } else {
        ""
    };
    format!("{sign}{}.{:02}", hundredths / 100, hundredths % 100)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Verdict::{Exclude as E, Include as I};

    fn t(a: u64, b: u64, c: u64, d: u64) -> ContingencyTable {
        ContingencyTable::new(a, b, c, d).unwrap()
    }

    fn q(n: i128, d: i128) -> Exact {
        Exact::new(n, d)
    }

    #[test]
    fn tabulates_worked_example() {
        let mut pairs = vec![(I, I), (I, E), (E, I)];
        pairs.extend(std::iter::repeat_n((E, E), 7));
        assert_eq!(tabulate(pairs).unwrap(), t(1, 1, 1, 7));
    }

    #[test]
    fn tabulates_perfect_round() {
        let mut pairs = vec![(I, I); 13];
        pairs.extend([(E, E), (E, E)]);
        let table = tabulate(pairs).unwrap();
        assert_eq!(table, t(13, 0, 0, 2));
        assert_eq!(table.total(), 15);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert_eq!(tabulate(Vec::new()), Err(AgreementError::EmptyInput));
        assert_eq!(
            ContingencyTable::new(0, 0, 0, 0),
            Err(AgreementError::EmptyTable)
        );
    }

    #[test]
    fn zero_table_does_not_deserialize() {
        let err = serde_json::from_str::<ContingencyTable>(r#"{"a":0,"b":0,"c":0,"d":0}"#);
        assert!(err.is_err());
    }

    #[test]
    fn observed_agreement_values() {
        assert_eq!(observed_agreement(&t(1, 1, 1, 7)), q(4, 5));
        assert_eq!(observed_agreement(&t(9, 1, 1, 4)), q(13, 15));
        assert_eq!(observed_agreement(&t(0, 5, 5, 0)), q(0, 1));
    }

    #[test]
    fn chance_agreement_values() {
        assert_eq!(chance_agreement(&t(1, 1, 1, 7)), q(68, 100));
        assert_eq!(chance_agreement(&t(9, 1, 1, 4)), q(125, 225));
        assert_eq!(chance_agreement(&t(4, 4, 4, 4)), q(1, 2));
    }

    #[test]
    fn kappa_values() {
        assert_eq!(cohen_kappa(&t(1, 1, 1, 7)), Some(q(3, 8)));
        assert_eq!(cohen_kappa(&t(9, 1, 1, 4)), Some(q(7, 10)));
        // (195 - 111) / (225 - 111)
        assert_eq!(cohen_kappa(&t(7, 2, 0, 6)), Some(q(84, 114)));
        assert_eq!(round2(&cohen_kappa(&t(7, 2, 0, 6)).unwrap()), "0.74");
        assert_eq!(cohen_kappa(&t(4, 4, 4, 4)), Some(q(0, 1)));
        assert_eq!(cohen_kappa(&t(10, 0, 0, 0)), None);
        assert_eq!(cohen_kappa(&t(0, 0, 0, 3)), None);
    }

    #[test]
    fn bounds_values() {
        let b = kappa_bounds(q(13, 15)).unwrap();
        assert_eq!(b.max, q(169, 229));
        assert_eq!(b.min, q(-1, 14));
        assert_eq!(b.nor, q(11, 15));
        assert_eq!(
            (round2(&b.max), round2(&b.min), round2(&b.nor)),
            ("0.74".into(), "-0.07".into(), "0.73".into())
        );

        let b = kappa_bounds(q(1, 1)).unwrap();
        assert_eq!((b.max, b.min, b.nor), (q(1, 1), q(0, 1), q(1, 1)));

        // 0.64 / 1.04 and -0.2 / 1.8
        let b = kappa_bounds(q(4, 5)).unwrap();
        assert_eq!(b.max, q(8, 13));
        assert_eq!(b.min, q(-1, 9));
        assert_eq!(b.nor, q(3, 5));
    }

    #[test]
    fn bounds_reject_out_of_range() {
        assert!(matches!(
            kappa_bounds(q(11, 10)),
            Err(AgreementError::Domain { .. })
        ));
        assert!(matches!(
            kappa_bounds(q(-1, 10)),
            Err(AgreementError::Domain { .. })
        ));
    }

    #[test]
    fn asymmetry_values() {
        let a = asymmetry(&t(9, 1, 1, 4));
        assert_eq!(a.sd, Some(q(0, 1)));
        assert_eq!(a.ppp, q(3, 5));
        let a = asymmetry(&t(7, 2, 0, 6));
        assert_eq!(a.sd, Some(q(1, 1)));
        assert_eq!(round2(&a.ppp), "0.47");
        let a = asymmetry(&t(13, 0, 0, 2));
        assert_eq!(a.sd, None);
        assert_eq!(round2(&a.ppp), "0.87");
        let a = asymmetry(&t(0, 3, 2, 0));
        assert_eq!(a.sa, None);
        assert_eq!(a.sd, Some(q(1, 5)));
    }

    #[test]
    fn band_edges() {
        use AgreementBand::*;
        let cases = [
            (-1.0, Poor),
            (-0.0001, Poor),
            (0.0, Slight),
            (0.2, Slight),
            (0.204, Slight),
            (0.205, Fair),
            (0.375, Fair),
            (0.4, Fair),
            (0.405, Moderate),
            (0.6, Moderate),
            (0.605, Substantial),
            (0.7, Substantial),
            (0.8, Substantial),
            (0.805, AlmostPerfect),
            (1.0, AlmostPerfect),
        ];
        for (k, band) in cases {
            assert_eq!(classify(k).unwrap(), band, "k = {k}");
        }
        assert!(classify(1.01).is_err());
        assert!(classify(-1.5).is_err());
        assert!(classify(f64::NAN).is_err());
    }

    #[test]
    fn paradox_cases() {
        let r = agreement_report(&t(1, 1, 1, 7));
        let p = paradox_flag(&r).unwrap();
        assert!(p.flagged);
        assert!((p.deviation - 0.225).abs() < 1e-12);

        let p = paradox_flag(&agreement_report(&t(9, 1, 1, 4))).unwrap();
        assert!(!p.flagged);
        assert!((p.deviation - 1.0 / 30.0).abs() < 1e-12);

        let p = paradox_flag(&agreement_report(&t(4, 4, 4, 4))).unwrap();
        assert!(!p.flagged);
        assert_eq!(p.deviation, 0.0);

        let degenerate = agreement_report(&t(0, 0, 0, 5));
        assert_eq!(paradox_flag(&degenerate), Err(AgreementError::Degenerate));
    }

    #[test]
    fn report_for_first_iteration() {
        let r = agreement_report(&t(9, 1, 1, 4));
        assert_eq!(r.kappa, Kappa::Defined(0.7));
        assert_eq!(r.band, Some(AgreementBand::Substantial));
        assert_eq!(r.paradox.map(|p| p.flagged), Some(false));
        let d = r.display();
        assert_eq!(d.k, "0.70");
        assert_eq!(d.k_max, "0.74");
        assert_eq!(d.k_min, "-0.07");
        assert_eq!(d.k_nor, "0.73");
        assert_eq!(d.s_d, "0.00");
        assert_eq!(d.ppp, "0.60");
    }

    #[test]
    fn degenerate_report() {
        let r = agreement_report(&t(0, 0, 0, 5));
        assert_eq!(r.kappa, Kappa::Degenerate);
        assert_eq!(r.p0, 1.0);
        assert_eq!(r.asymmetry.ppp, 0.0);
        assert_eq!(r.asymmetry.sd, None);
        assert_eq!(r.band, None);
        assert_eq!(r.paradox, None);
        assert_eq!(r.display().k, UNDEFINED);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round2(&q(1, 200)), "0.01");
        assert_eq!(round2(&q(-1, 200)), "-0.01");
        assert_eq!(round2(&q(-1, 1000)), "0.00");
        assert_eq!(round2(&q(147, 200)), "0.74");
        assert_eq!(round2(&q(1, 1)), "1.00");
        assert_eq!(round2(&q(-1, 1)), "-1.00");
    }
}
