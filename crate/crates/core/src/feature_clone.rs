//! Feature-clone baseline: the virtual right view is the left view itself.

use crate::types::FeatureMap;

/// Deep copy of the left features, used as the virtual right features.
pub fn clone_features(left: &FeatureMap) -> FeatureMap {
    left.clone()
}
