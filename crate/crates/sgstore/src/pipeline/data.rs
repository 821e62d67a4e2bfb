//! Toy physics cargo moved around by the pipeline: tracks, clusters, and
//! collections of element links. The values carry no physical meaning.

use crate::clid::ClidError;
use crate::links::{ElementLink, LinkableContainer, PositionalPolicy, Sequence};
use crate::persist::{ConverterRegistry, PersistError};
use crate::registry::TypeRegistry;
use crate::storable::{CodecError, Persistable, Storable};

/// A reconstructed particle trajectory: id, momentum components, quality.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Track {
    pub id: u32,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub quality: f64,
}

/// The standard collection the pipeline algorithms trade in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackCollection(pub Vec<Track>);

impl Storable for TrackCollection {
    fn type_name() -> &'static str {
        "TrackCollection"
    }

    /// One `id px py pz quality` line per track, shortest float form.
    fn encode(&self) -> Vec<u8> {
        self.0
            .iter()
            .map(|t| format!("{} {} {} {} {}", t.id, t.px, t.py, t.pz, t.quality))
            .collect::<Vec<_>>()
            .join("\n")
            .into_bytes()
    }
}

impl Persistable for TrackCollection {
    fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| CodecError::new(format!("track payload is not UTF-8: {e}")))?;
        let mut tracks = Vec::new();
        for line in text.lines() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [id, px, py, pz, quality] = fields.as_slice() else {
                return Err(CodecError::new(format!("malformed track line `{line}`")));
            };
            tracks.push(Track {
                id: parse(id, line)?,
                px: parse(px, line)?,
                py: parse(py, line)?,
                pz: parse(pz, line)?,
                quality: parse(quality, line)?,
            });
        }
        Ok(TrackCollection(tracks))
    }
}

fn parse<T: std::str::FromStr>(token: &str, line: &str) -> Result<T, CodecError> {
    token
        .parse()
        .map_err(|_| CodecError::new(format!("bad field `{token}` in `{line}`")))
}

impl Sequence for TrackCollection {
    type Item = Track;
    fn items(&self) -> &[Track] {
        &self.0
    }
}

impl LinkableContainer for TrackCollection {
    type Element = Track;
    type Policy = PositionalPolicy;
}

/// A calorimeter-style energy deposit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cluster {
    pub id: u32,
    pub energy: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterCollection(pub Vec<Cluster>);

impl Storable for ClusterCollection {
    fn type_name() -> &'static str {
        "ClusterCollection"
    }

    fn encode(&self) -> Vec<u8> {
        self.0
            .iter()
            .map(|c| format!("{} {} {}", c.id, c.energy, c.width))
            .collect::<Vec<_>>()
            .join("\n")
            .into_bytes()
    }
}

impl Persistable for ClusterCollection {
    fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| CodecError::new(format!("cluster payload is not UTF-8: {e}")))?;
        let mut clusters = Vec::new();
        for line in text.lines() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [id, energy, width] = fields.as_slice() else {
                return Err(CodecError::new(format!("malformed cluster line `{line}`")));
            };
            clusters.push(Cluster {
                id: parse(id, line)?,
                energy: parse(energy, line)?,
                width: parse(width, line)?,
            });
        }
        Ok(ClusterCollection(clusters))
    }
}

impl Sequence for ClusterCollection {
    type Item = Cluster;
    fn items(&self) -> &[Cluster] {
        &self.0
    }
}

impl LinkableContainer for ClusterCollection {
    type Element = Cluster;
    type Policy = PositionalPolicy;
}

/// Element links from selected tracks back into their source collection,
/// recorded as a data object in its own right.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkCollection(pub Vec<ElementLink<TrackCollection>>);

impl Storable for LinkCollection {
    fn type_name() -> &'static str {
        "LinkCollection"
    }

    /// One persistent link record per line.
    fn encode(&self) -> Vec<u8> {
        self.0
            .iter()
            .map(ElementLink::to_persistent)
            .collect::<Vec<_>>()
            .join("\n")
            .into_bytes()
    }
}

impl Persistable for LinkCollection {
    fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| CodecError::new(format!("link payload is not UTF-8: {e}")))?;
        let links = text
            .lines()
            .map(|line| {
                ElementLink::from_persistent(line).map_err(|e| CodecError::new(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LinkCollection(links))
    }
}

/// Registers every built-in pipeline type plus the demo containers.
pub fn register_types(registry: &TypeRegistry) -> Result<(), ClidError> {
    registry.register::<TrackCollection>()?;
    registry.register::<ClusterCollection>()?;
    registry.register::<LinkCollection>()?;
    registry.register::<crate::containers::NumberSequence>()?;
    registry.register::<crate::containers::StringMap>()?;
    registry.register::<crate::graph::Graph>()?;
    Ok(())
}

/// Registers converters for every built-in type.
pub fn register_converters(converters: &mut ConverterRegistry) -> Result<(), PersistError> {
    converters.register_type::<TrackCollection>()?;
    converters.register_type::<ClusterCollection>()?;
    converters.register_type::<LinkCollection>()?;
    converters.register_type::<crate::containers::NumberSequence>()?;
    converters.register_type::<crate::containers::StringMap>()?;
    converters.register_type::<crate::graph::Graph>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tracks() -> TrackCollection {
        TrackCollection(vec![
            Track {
                id: 0,
                px: 0.5,
                py: -0.25,
                pz: 1.0,
                quality: 0.75,
            },
            Track {
                id: 1,
                px: -1.0,
                py: 0.125,
                pz: 0.0,
                quality: 0.5,
            },
        ])
    }

    #[test]
    fn track_collections_round_trip() {
        let tracks = sample_tracks();
        let decoded = TrackCollection::decode(&tracks.encode()).unwrap();
        assert_eq!(decoded, tracks);
        assert_eq!(decoded.encode(), tracks.encode());
    }

    #[test]
    fn empty_collections_round_trip() {
        assert_eq!(
            TrackCollection::decode(&TrackCollection::default().encode()).unwrap(),
            TrackCollection::default()
        );
        assert_eq!(
            ClusterCollection::decode(&ClusterCollection::default().encode()).unwrap(),
            ClusterCollection::default()
        );
    }

    #[test]
    fn malformed_track_lines_are_rejected() {
        assert!(TrackCollection::decode(b"1 2 3").is_err());
        assert!(TrackCollection::decode(b"a b c d e").is_err());
    }

    #[test]
    fn cluster_collections_round_trip() {
        let clusters = ClusterCollection(vec![Cluster {
            id: 3,
            energy: 7.5,
            width: 0.1,
        }]);
        assert_eq!(
            ClusterCollection::decode(&clusters.encode()).unwrap(),
            clusters
        );
    }

    #[test]
    fn built_in_names_do_not_collide() {
        let registry = TypeRegistry::new();
        register_types(&registry).unwrap();
        assert_eq!(registry.len(), 6);
        assert!(registry.snapshot().verify().is_empty());
    }
}
