pub mod ablate;
pub mod autoencoder;
pub mod corpus;
pub mod error;
pub mod mask;
pub mod metrics;
pub mod quant;
pub mod reward;
pub mod words;

mod binio;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/masks.md")]
    mod masks {}
    #[doc = include_str!("../../../book/src/quantization.md")]
    mod quantization {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/mask-words.md")]
    mod mask_words {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/reward-metrics.md")]
    mod reward_metrics {}
    #[doc = include_str!("../../../book/src/ablation.md")]
    mod ablation {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
