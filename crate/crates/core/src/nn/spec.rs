use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Architecture of the dense-encoder U-Net.
///
/// Encoder level `i` is a dense module whose output is projected to
/// `encoder_maps[i]` channels; all but the last level are followed by 2x2
/// max-pooling. Decoder level `j` upsamples, joins the peer encoder output and
/// produces `decoder_maps[j]` channels. A 1x1 convolution with logistic
/// activation yields one probability per pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkSpec {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub encoder_maps: Vec<usize>,
    pub decoder_maps: Vec<usize>,
    /// Densely connected 3x3 layers per dense module.
    pub dense_block_depth: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            height: 240,
            width: 240,
            in_channels: 4,
            encoder_maps: vec![64, 128, 256],
            decoder_maps: vec![128, 64],
            dense_block_depth: 3,
        }
    }
}

impl NetworkSpec {
    pub const LEVELS: usize = 3;

    /// Default widths at a different input size.
    pub fn with_input(height: usize, width: usize) -> Self {
        NetworkSpec {
            height,
            width,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let levels = self.encoder_maps.len();
        if levels != Self::LEVELS || self.decoder_maps.len() != levels - 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} dense modules and {} convolution modules, got {} and {}",
                Self::LEVELS,
                Self::LEVELS - 1,
                levels,
                self.decoder_maps.len()
            )));
        }
        if self.encoder_maps.windows(2).any(|w| w[0] >= w[1]) || self.encoder_maps[0] == 0 {
            return Err(Error::InvalidInput(format!(
                "encoder maps must be strictly increasing and positive: {:?}",
                self.encoder_maps
            )));
        }
        let mirrored: Vec<usize> = self.encoder_maps[..levels - 1].iter().rev().copied().collect();
        if self.decoder_maps != mirrored {
            return Err(Error::InvalidInput(format!(
                "decoder maps {:?} must mirror encoder maps {:?}",
                self.decoder_maps, mirrored
            )));
        }
        if self.dense_block_depth == 0 || self.in_channels == 0 {
            return Err(Error::InvalidInput("dense depth and input channels must be positive".into()));
        }
        let div = self.downsample_factor();
        if self.height == 0 || self.width == 0 || !self.height.is_multiple_of(div) || !self.width.is_multiple_of(div) {
            return Err(Error::shape(format!(
                "input {}x{} is not divisible by {div}",
                self.height, self.width
            )));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.encoder_maps.len()
    }

    pub fn downsample_factor(&self) -> usize {
        1 << (self.encoder_maps.len().saturating_sub(1))
    }

    /// Per-layer growth inside dense module `level`.
    pub fn growth(&self, level: usize) -> usize {
        self.encoder_maps[level].div_ceil(self.dense_block_depth)
    }

    /// Channels entering dense module `level`.
    pub fn dense_input(&self, level: usize) -> usize {
        if level == 0 {
            self.in_channels
        } else {
            self.encoder_maps[level - 1]
        }
    }

    /// Output channels of every module, encoder then decoder.
    pub fn channel_progression(&self) -> Vec<usize> {
        self.encoder_maps.iter().chain(&self.decoder_maps).copied().collect()
    }

    /// Identifies the parameter layout. Input size is not part of it: the
    /// network is fully convolutional.
    pub fn fingerprint(&self) -> String {
        let canonical = format!(
            "dense-unet/v1;in={};enc={:?};dec={:?};depth={}",
            self.in_channels, self.encoder_maps, self.decoder_maps, self.dense_block_depth
        );
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..16].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let s = NetworkSpec::default();
        s.validate().unwrap();
        assert_eq!(s.channel_progression(), [64, 128, 256, 128, 64]);
    }

    #[test]
    fn rejects_indivisible_input() {
        let s = NetworkSpec::with_input(242, 240);
        assert!(matches!(s.validate(), Err(Error::Shape(_))));
    }

    #[test]
    fn rejects_non_mirrored_decoder() {
        let mut s = NetworkSpec::default();
        s.decoder_maps = vec![64, 128];
        assert!(s.validate().is_err());
        let mut s = NetworkSpec::default();
        s.encoder_maps = vec![64, 128];
        s.decoder_maps = vec![64];
        assert!(s.validate().is_err());
    }

    #[test]
    fn fingerprint_ignores_input_size() {
        assert_eq!(
            NetworkSpec::default().fingerprint(),
            NetworkSpec::with_input(64, 64).fingerprint()
        );
        let mut other = NetworkSpec::default();
        other.dense_block_depth = 2;
        assert_ne!(NetworkSpec::default().fingerprint(), other.fingerprint());
    }
}
