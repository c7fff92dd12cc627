use serde::{Deserialize, Serialize};

use crate::synthbed::ThermalFrame;
use crate::{Error, Result};

/// Which capture within a layer represents the fusing state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameChoice {
    #[default]
    Last,
    Index(usize),
}

/// Pick one frame per layer from a stack ordered by capture. Frames are
/// grouped by their `layer` field; every layer in `0..layers` must appear.
pub fn select_fusing_frames(frames: &[ThermalFrame], layers: usize, choice: FrameChoice) -> Result<Vec<ThermalFrame>> {
    let mut by_layer: Vec<Vec<&ThermalFrame>> = vec![Vec::new(); layers];
    for f in frames {
        if f.layer >= layers {
            return Err(Error::InvalidArgument(format!(
                "frame reports layer {} but the build has {layers} layers",
                f.layer
            )));
        }
        by_layer[f.layer].push(f);
    }
    let missing: Vec<usize> = (0..layers).filter(|&l| by_layer[l].is_empty()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingLayers(missing));
    }
    by_layer
        .into_iter()
        .enumerate()
        .map(|(layer, mut group)| {
            group.sort_by_key(|f| f.frame);
            let pick = match choice {
                FrameChoice::Last => group.len() - 1,
                FrameChoice::Index(i) if i < group.len() => i,
                FrameChoice::Index(i) => {
                    return Err(Error::InvalidArgument(format!(
                        "frame index {i} out of range for layer {layer} with {} frames",
                        group.len()
                    )))
                }
            };
            Ok(group[pick].clone())
        })
        .collect()
}
