//! Pipeline configuration, serialised next to every stage output.

use serde::{Deserialize, Serialize};

use crate::eval::IcpParams;
use crate::fusion::FusionParams;
use crate::stereo::SgmParams;
use crate::uq::UqParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Register the cloud to the reference before measuring errors.
    pub icp: bool,
    pub icp_params: IcpParams,
    /// Points farther than this outside the reference's horizontal extent
    /// are not evaluated, metres.
    pub crop_margin: f64,
    /// Error split threshold, metres.
    pub error_threshold: f64,
    pub ray_edges: Vec<f64>,
    pub angle_edges: Vec<f64>,
    /// Width of the energy bins in the MAE-vs-energy report, cost units.
    pub energy_bin_size: f64,
    /// Bins with fewer points are left out of trend fits.
    pub min_bin_count: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            icp: true,
            icp_params: IcpParams::default(),
            crop_margin: 1.0,
            error_threshold: 0.5,
            ray_edges: (3..=11).map(f64::from).collect(),
            angle_edges: (0..=10).map(|i| 5.0 * i as f64).collect(),
            energy_bin_size: 1000.0,
            min_bin_count: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub sgm: SgmParams,
    pub fusion: FusionParams,
    /// Views tilted less than this from `down` are nadir, degrees.
    pub tilt_threshold_deg: f64,
    pub down: [f64; 3],
    pub eval: EvalConfig,
    pub uq: UqParams,
    /// Seed of generated synthetic scenes.
    pub seed: u64,
    /// Grid pitch of synthetic reference clouds, metres.
    pub reference_pitch: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sgm: SgmParams::default(),
            fusion: FusionParams::default(),
            tilt_threshold_deg: 20.0,
            down: [0.0, 0.0, -1.0],
            eval: EvalConfig::default(),
            uq: UqParams::default(),
            seed: 7,
            reference_pitch: 0.25,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.sgm.validate().map_err(|e| e.to_string())?;
        let f = &self.fusion;
        if f.k_consistency < 2 {
            return Err(format!(
                "k_consistency must be at least 2, got {}",
                f.k_consistency
            ));
        }
        if f.n_neighbors < f.k_consistency {
            return Err(format!(
                "n_neighbors {} is below k_consistency {}",
                f.n_neighbors, f.k_consistency
            ));
        }
        if !(f.eps_rel > 0.0 && f.eps_rel < 1.0) {
            return Err(format!("eps_rel must lie in (0, 1), got {}", f.eps_rel));
        }
        if self.uq.min_rays < 3 {
            return Err(format!(
                "min_rays must be at least 3, got {}",
                self.uq.min_rays
            ));
        }
        for (name, v) in [
            ("uq.bin_size", self.uq.bin_size),
            ("eval.energy_bin_size", self.eval.energy_bin_size),
            ("eval.error_threshold", self.eval.error_threshold),
            ("reference_pitch", self.reference_pitch),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, e) in [
            ("eval.ray_edges", &self.eval.ray_edges),
            ("eval.angle_edges", &self.eval.angle_edges),
        ] {
            if e.is_empty() || e.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(format!("{name} must be strictly increasing"));
            }
        }
        if self.down.iter().all(|&c| c == 0.0) {
            return Err("down must be a non-zero vector".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let c = PipelineConfig::default();
        assert_eq!(c.fusion.n_neighbors, 10);
        assert_eq!(c.fusion.k_consistency, 2);
        assert_eq!(c.sgm.lambda_p1, 8);
        assert_eq!(c.uq.bin_size, 1000.0);
        assert_eq!(c.uq.min_rays, 6);
        c.validate().unwrap();
        let back: PipelineConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let mut odd = c.clone();
        odd.fusion.eps_rel = 0.1 + 0.2;
        odd.reference_pitch = 1.0 / 3.0;
        let back: PipelineConfig = serde_json::from_str(&odd.to_json()).unwrap();
        assert_eq!(back, odd);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c: PipelineConfig =
            serde_json::from_str(r#"{"fusion": {"k_consistency": 3}, "uq": {"bin_size": 50}}"#)
                .unwrap();
        assert_eq!(c.fusion.k_consistency, 3);
        assert_eq!(c.fusion.n_neighbors, 10);
        assert_eq!(c.uq.bin_size, 50.0);
        assert_eq!(c.uq.min_samples, 200);
    }

    #[test]
    fn validation() {
        let mut c = PipelineConfig::default();
        c.fusion.k_consistency = 1;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.eval.ray_edges = vec![3.0, 3.0];
        assert!(c.validate().is_err());
    }
}
