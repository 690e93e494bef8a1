use hoi_core::{HoiError, Result};
use serde::{Deserialize, Serialize};

/// Adapter rank used when adapters are switched on without an explicit rank.
pub const DEFAULT_LORA_RANK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub max_len: usize,
    /// Embeddings spliced per pose placeholder.
    pub pose_tokens: usize,
    /// Side of the square silhouette fed to the image encoder.
    pub image_side: usize,
    pub patch: usize,
    /// Width of the frozen image and point feature maps.
    pub feature_width: usize,
    /// Object points fed to the point encoder.
    pub point_count: usize,
    /// 0 disables adapters.
    pub lora_rank: usize,
    pub lora_alpha: f64,
    pub dropout: f64,
    /// Decoders predict offsets from the reference state; absolute parameters otherwise.
    pub offset_regression: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            layers: 4,
            heads: 4,
            ff_width: 512,
            max_len: 256,
            pose_tokens: 1,
            image_side: 32,
            patch: 8,
            feature_width: 64,
            point_count: 128,
            lora_rank: 0,
            lora_alpha: 16.0,
            dropout: 0.0,
            offset_regression: true,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("layers", self.layers),
            ("heads", self.heads),
            ("ff_width", self.ff_width),
            ("max_len", self.max_len),
            ("pose_tokens", self.pose_tokens),
            ("image_side", self.image_side),
            ("patch", self.patch),
            ("feature_width", self.feature_width),
            ("point_count", self.point_count),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(HoiError::Config(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.heads != 0 {
            return Err(HoiError::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.image_side % self.patch != 0 {
            return Err(HoiError::Config(format!(
                "image side {} is not a multiple of the patch size {}",
                self.image_side, self.patch
            )));
        }
        if !(self.lora_alpha.is_finite() && self.lora_alpha > 0.0) {
            return Err(HoiError::Config("lora_alpha must be positive".into()));
        }
        if self.dropout != 0.0 {
            return Err(HoiError::Config("dropout is not supported; set it to 0".into()));
        }
        Ok(())
    }

    pub fn image_tokens(&self) -> usize {
        let per_side = self.image_side / self.patch;
        per_side * per_side
    }

    /// Two layers of width 32, for gradient checks and quick tests.
    pub fn tiny() -> Self {
        Self {
            d_model: 32,
            layers: 2,
            heads: 2,
            ff_width: 64,
            max_len: 256,
            feature_width: 16,
            point_count: 24,
            ..Self::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny().validate().unwrap();
        assert_eq!(ModelConfig::default().image_tokens(), 16);
    }

    #[test]
    fn indivisible_heads_rejected() {
        let c = ModelConfig {
            heads: 3,
            ..ModelConfig::default()
        };
        assert!(matches!(c.validate(), Err(HoiError::Config(_))));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(serde_json::from_str::<ModelConfig>(r#"{"d_model": 64, "width": 3}"#).is_err());
        let c: ModelConfig = serde_json::from_str(r#"{"d_model": 64}"#).unwrap();
        assert_eq!(c.layers, 4);
    }
}
