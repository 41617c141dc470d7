//! SISO channel composition, received power and power delay profiles.
//!
//! The channel at one receiver is the sum of conventional path amplitudes
//! plus the RIS-cascaded ones: `H = H_conv + H_ris`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::em::{dbm_from_amplitude, mw_to_dbm, path_amplitude, Carrier, EmError};
use crate::raytrace::{PathTag, PropagationPath};
use crate::scene::Scene;

/// A propagation path with its complex amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct PathContribution {
    pub path: PropagationPath,
    pub amplitude: Complex64,
}

impl PathContribution {
    pub fn tag(&self) -> PathTag {
        self.path.tag
    }

    pub fn power_dbm(&self, pt_dbm: f64) -> f64 {
        dbm_from_amplitude(self.amplitude, pt_dbm)
    }
}

/// Amplitudes of conventional (non-RIS) paths.
pub fn conventional_contributions(
    scene: &Scene,
    paths: Vec<PropagationPath>,
    carrier: &Carrier,
) -> Result<Vec<PathContribution>, EmError> {
    paths
        .into_iter()
        .map(|path| {
            let amplitude = path_amplitude(&path, carrier, scene)?;
            Ok(PathContribution { path, amplitude })
        })
        .collect()
}

/// Narrowband channel at one receiver location.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub conventional: Vec<PathContribution>,
    pub ris: Vec<PathContribution>,
    pub carrier: Carrier,
}

impl ChannelSample {
    /// Coherent sum of every path amplitude.
    pub fn h(&self) -> Complex64 {
        self.contributions().map(|c| c.amplitude).sum()
    }

    /// Sum over the RIS paths only.
    pub fn h_ris(&self) -> Complex64 {
        self.ris.iter().map(|c| c.amplitude).sum()
    }

    /// Conventional paths first, then RIS paths.
    pub fn contributions(&self) -> impl Iterator<Item = &PathContribution> {
        self.conventional.iter().chain(&self.ris)
    }

    /// The same sample with every RIS path removed.
    pub fn without_ris(&self) -> Self {
        Self {
            conventional: self.conventional.clone(),
            ris: Vec::new(),
            carrier: self.carrier,
        }
    }
}

pub fn compose_channel(
    conventional: Vec<PathContribution>,
    ris: Vec<PathContribution>,
    carrier: Carrier,
) -> ChannelSample {
    ChannelSample {
        conventional,
        ris,
        carrier,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SumMode {
    /// `|Σ a|²`: phases interfere.
    #[default]
    Coherent,
    /// `Σ |a|²`: phase-averaged power.
    Incoherent,
}

/// Received power in dBm; `-inf` when nothing arrives.
pub fn total_rx_power(sample: &ChannelSample, pt_dbm: f64, mode: SumMode) -> f64 {
    match mode {
        SumMode::Coherent => dbm_from_amplitude(sample.h(), pt_dbm),
        SumMode::Incoherent => {
            let p: f64 = sample.contributions().map(|c| c.amplitude.norm_sqr()).sum();
            if p == 0.0 {
                f64::NEG_INFINITY
            } else {
                pt_dbm + mw_to_dbm(p)
            }
        }
    }
}

/// One impulse of a power delay profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpBin {
    pub delay_s: f64,
    pub power_dbm: f64,
    pub tag: PathTag,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pdp {
    pub bins: Vec<PdpBin>,
}

impl Pdp {
    /// Strongest bin with the given tag.
    pub fn strongest(&self, tag: PathTag) -> Option<&PdpBin> {
        self.bins
            .iter()
            .filter(|b| b.tag == tag)
            .max_by(|a, b| a.power_dbm.total_cmp(&b.power_dbm))
    }
}

/// One bin per path at its exact delay, sorted by delay (ties: conventional
/// before RIS, then descending power).
pub fn power_delay_profile(sample: &ChannelSample, pt_dbm: f64) -> Pdp {
    let mut bins: Vec<PdpBin> = sample
        .contributions()
        .map(|c| PdpBin {
            delay_s: c.path.delay,
            power_dbm: c.power_dbm(pt_dbm),
            tag: c.path.tag,
        })
        .collect();
    bins.sort_by(|a, b| {
        a.delay_s
            .total_cmp(&b.delay_s)
            .then((a.tag == PathTag::Ris).cmp(&(b.tag == PathTag::Ris)))
            .then(b.power_dbm.total_cmp(&a.power_dbm))
    });
    Pdp { bins }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec3;

    fn carrier() -> Carrier {
        Carrier::new(3.7e9).unwrap()
    }

    fn contribution(len: f64, amp: Complex64, tag: PathTag) -> PathContribution {
        let mut path = PropagationPath::direct(Vec3::zeros(), Vec3::new(len, 0.0, 0.0));
        path.tag = tag;
        PathContribution {
            path,
            amplitude: amp,
        }
    }

    fn conv(len: f64, amp: Complex64) -> PathContribution {
        contribution(len, amp, PathTag::Conventional)
    }

    #[test]
    fn composition_examples() {
        let a = Complex64::new(3e-4, -1e-4);
        let base = compose_channel(vec![conv(2.0, a)], vec![], carrier());
        assert_eq!(base.h(), a);
        let only_ris = compose_channel(vec![], vec![contribution(2.0, a, PathTag::Ris)], carrier());
        assert_eq!(only_ris.h(), a);
        let cancel = compose_channel(
            vec![conv(2.0, a)],
            vec![contribution(3.0, -a, PathTag::Ris)],
            carrier(),
        );
        assert_eq!(cancel.h(), Complex64::new(0.0, 0.0));
        assert_eq!(cancel.without_ris(), base);
    }

    #[test]
    fn power_examples() {
        let single = 10f64.powf(-63.81 / 20.0);
        let one = compose_channel(
            vec![conv(10.0, Complex64::new(single, 0.0))],
            vec![],
            carrier(),
        );
        for mode in [SumMode::Coherent, SumMode::Incoherent] {
            assert!((total_rx_power(&one, 30.0, mode) + 33.81).abs() < 1e-9);
        }

        let a = Complex64::new(1e-3, 0.0);
        let opposed = compose_channel(vec![conv(1.0, a), conv(2.0, -a)], vec![], carrier());
        assert_eq!(
            total_rx_power(&opposed, 0.0, SumMode::Coherent),
            f64::NEG_INFINITY
        );
        let inc = total_rx_power(&opposed, 0.0, SumMode::Incoherent);
        assert!((inc - (-60.0 + 3.0103)).abs() < 1e-4);

        let aligned = compose_channel(vec![conv(1.0, a), conv(2.0, a)], vec![], carrier());
        assert!((total_rx_power(&aligned, 0.0, SumMode::Coherent) - (-60.0 + 6.0206)).abs() < 1e-4);
        assert!(
            (total_rx_power(&aligned, 0.0, SumMode::Incoherent) - (-60.0 + 3.0103)).abs() < 1e-4
        );
    }

    #[test]
    fn empty_channel_has_no_power() {
        let sample = compose_channel(vec![], vec![], carrier());
        assert_eq!(
            total_rx_power(&sample, 30.0, SumMode::Coherent),
            f64::NEG_INFINITY
        );
        assert_eq!(
            total_rx_power(&sample, 30.0, SumMode::Incoherent),
            f64::NEG_INFINITY
        );
        assert!(power_delay_profile(&sample, 30.0).bins.is_empty());
    }

    #[test]
    fn pdp_examples() {
        let direct = compose_channel(
            vec![conv(5.0, Complex64::new(1e-3, 0.0))],
            vec![],
            carrier(),
        );
        let pdp = power_delay_profile(&direct, 30.0);
        assert_eq!(pdp.bins.len(), 1);
        assert!((pdp.bins[0].delay_s * 1e9 - 16.678).abs() < 1e-3);

        let c = 10f64.powf(-110.0 / 20.0);
        let r = 10f64.powf(-103.0 / 20.0);
        let sample = compose_channel(
            vec![conv(30.0, Complex64::new(c, 0.0))],
            vec![contribution(45.0, Complex64::new(0.0, r), PathTag::Ris)],
            carrier(),
        );
        let pdp = power_delay_profile(&sample, 30.0);
        let conv_peak = pdp.strongest(PathTag::Conventional).unwrap().power_dbm;
        let ris_peak = pdp.strongest(PathTag::Ris).unwrap().power_dbm;
        assert!((conv_peak + 80.0).abs() < 1e-9);
        assert!((ris_peak - conv_peak - 7.0).abs() < 1e-9);
    }

    #[test]
    fn pdp_sorted_by_delay() {
        let sample = compose_channel(
            vec![
                conv(9.0, Complex64::new(1e-4, 0.0)),
                conv(3.0, Complex64::new(1e-3, 0.0)),
                conv(5.0, Complex64::new(0.0, 0.0)),
            ],
            vec![contribution(3.0, Complex64::new(1e-5, 0.0), PathTag::Ris)],
            carrier(),
        );
        let pdp = power_delay_profile(&sample, 0.0);
        assert_eq!(pdp.bins.len(), 4);
        assert!(pdp.bins.windows(2).all(|w| w[0].delay_s <= w[1].delay_s));
        assert_eq!(pdp.bins[0].tag, PathTag::Conventional);
        assert_eq!(pdp.bins[1].tag, PathTag::Ris);
        assert_eq!(pdp.bins[2].power_dbm, f64::NEG_INFINITY);
    }

    #[test]
    fn free_space_link_power() {
        let scene = Scene::empty();
        let carrier = carrier();
        let path = PropagationPath::direct(Vec3::zeros(), Vec3::new(10.0, 0.0, 0.0));
        let c = conventional_contributions(&scene, vec![path], &carrier).unwrap();
        let sample = compose_channel(c, vec![], carrier);
        let p = total_rx_power(&sample, 30.0, SumMode::Coherent);
        assert!((p + 33.81).abs() < 5e-3);
    }
}
