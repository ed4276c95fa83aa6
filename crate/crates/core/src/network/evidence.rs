use std::collections::BTreeSet;

use super::{IndicatorValues, Network, VariableId};
use crate::data::ImageRecord;
use crate::error::Result;
use crate::spatial::{compute_relations, Location, PartId};

/// Indicator values of one image for the given variables.
///
/// Parts are one-hot (absence counts as evidence); parts listed in
/// `query_parts` are marginalized, as is every pair that involves them. A
/// pair whose parts are both present in the region carries the relations of
/// the first detection of each; otherwise its four indicators are 1.
pub fn assignment_to_indicators<'a>(
    image: &ImageRecord,
    variables: impl IntoIterator<Item = &'a VariableId>,
    query_parts: &BTreeSet<PartId>,
) -> IndicatorValues {
    let mut values = IndicatorValues::new();
    for &var in variables {
        match var {
            VariableId::Part { part, region } => {
                if query_parts.contains(&part) {
                    values.marginalize_part(part, region);
                } else {
                    values.set_part(part, region, image.locate(part, region).is_some());
                }
            }
            VariableId::Pair { pair, region } => {
                if query_parts.contains(&pair.a()) || query_parts.contains(&pair.b()) {
                    values.marginalize_pair(pair, region);
                    continue;
                }
                match (image.locate(pair.a(), region), image.locate(pair.b(), region)) {
                    (Some(la), Some(lb)) => values.set_pair(pair, region, compute_relations(la, lb)),
                    _ => values.marginalize_pair(pair, region),
                }
            }
        }
    }
    values
}

/// Full-evidence indicators of an image for every variable of `network`.
pub fn image_indicators(network: &Network, image: &ImageRecord) -> IndicatorValues {
    assignment_to_indicators(image, &network.variables(), &BTreeSet::new())
}

/// Same as [`assignment_to_indicators`] but from a binary activation vector
/// with per-part locations. Fails if an active part has no location.
pub fn assignment_from_activations<'a>(
    activations: &[bool],
    locations: &[Option<Location>],
    width: u32,
    height: u32,
    variables: impl IntoIterator<Item = &'a VariableId>,
    query_parts: &BTreeSet<PartId>,
) -> Result<IndicatorValues> {
    let image = ImageRecord::from_activations(
        "activations",
        crate::network::ClassId(0),
        width,
        height,
        activations,
        locations,
    )?;
    Ok(assignment_to_indicators(&image, variables, query_parts))
}
