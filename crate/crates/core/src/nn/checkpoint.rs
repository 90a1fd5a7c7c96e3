//! Encoder checkpoints: magic `COREENC1`, length-prefixed JSON config,
//! then all parameters as little-endian doubles in the flat order
//! documented in `params`.

use crate::container;
use crate::error::Result;
use crate::nn::config::EncoderConfig;
use crate::nn::encoder::FrozenEncoder;
use crate::nn::params::EncoderParams;

const ENCODER_MAGIC: &[u8; 8] = b"COREENC1";

pub fn save_encoder(enc: &FrozenEncoder) -> Result<Vec<u8>> {
    let json = serde_json::to_string(enc.config())?;
    Ok(container::write(
        ENCODER_MAGIC,
        &json,
        &enc.params().to_flat(),
    ))
}

pub fn load_encoder(bytes: &[u8]) -> Result<FrozenEncoder> {
    let (json, flat) = container::read(bytes, ENCODER_MAGIC)?;
    let config: EncoderConfig = serde_json::from_str(&json)?;
    config.validate()?;
    let params = EncoderParams::from_flat(&config, &flat)?;
    Ok(FrozenEncoder::from_parts(config, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::InputMode;

    fn cfg() -> EncoderConfig {
        EncoderConfig {
            depth: 2,
            dim: 16,
            heads: 2,
            mlp_ratio: 2.0,
            tokens: 5,
            input: InputMode::Tokens { token_dim: 3 },
            seed: 88,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let enc = FrozenEncoder::seeded(&cfg()).unwrap();
        let bytes = save_encoder(&enc).unwrap();
        let back = load_encoder(&bytes).unwrap();
        assert_eq!(enc.config(), back.config());
        assert_eq!(enc.params(), back.params());
        assert_eq!(enc.param_checksum(), back.param_checksum());
    }

    #[test]
    fn corrupted_magic_is_a_version_error() {
        let enc = FrozenEncoder::seeded(&cfg()).unwrap();
        let mut bytes = save_encoder(&enc).unwrap();
        bytes[7] = b'9';
        assert!(load_encoder(&bytes).is_err());
        let bytes = save_encoder(&enc).unwrap();
        assert!(load_encoder(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn file_size_near_parameter_payload() {
        let enc = FrozenEncoder::seeded(&cfg()).unwrap();
        let bytes = save_encoder(&enc).unwrap();
        let payload = enc.total_param_count() * 8;
        assert!(bytes.len() >= payload);
        assert!(bytes.len() <= 2 * payload, "{} vs {payload}", bytes.len());
    }
}
