//! Per-location metadata and its rendering into the natural-language
//! descriptions embedded in prompts.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::templates::{group_thousands, TemplateSet};
use crate::tsdata::TimeSeriesStore;

/// Attributes of one sensor location. `population` and `lanes` are optional;
/// when absent the matching sentence is omitted from rendered text rather
/// than filled with a placeholder.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationMeta {
    pub location_id: u32,
    pub latitude: f64,
    pub longitude: f64,
    pub city: String,
    pub county: String,
    pub population: Option<u64>,
    pub freeway: String,
    pub lanes: Option<u32>,
    pub historical_total_volume: Option<u64>,
}

impl LocationMeta {
    fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::data(format!(
                "location_id {}: latitude {} out of [-90, 90]",
                self.location_id, self.latitude
            )));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::data(format!(
                "location_id {}: longitude {} out of [-180, 180]",
                self.location_id, self.longitude
            )));
        }
        if self.lanes == Some(0) {
            return Err(Error::data(format!(
                "location_id {}: lanes must be at least 1",
                self.location_id
            )));
        }
        Ok(())
    }
}

/// The annotation shown before a neighbor's details: the criterion value
/// under which it was retrieved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Annotation {
    Similarity(f64),
    DistanceKm(f64),
}

impl Annotation {
    /// Similarity to 4 decimals, distance to 2 decimals with a km unit.
    pub fn render(&self) -> String {
        match self {
            Annotation::Similarity(v) => format!("similarity={v:.4}"),
            Annotation::DistanceKm(v) => format!("distance={v:.2}km"),
        }
    }
}

/// Metadata records keyed by location id plus the shared background text.
#[derive(Debug, Clone, Default)]
pub struct MetadataDB {
    records: BTreeMap<u32, LocationMeta>,
    pub background_text: String,
}

impl MetadataDB {
    pub fn new(records: Vec<LocationMeta>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for rec in records {
            rec.validate()?;
            let id = rec.location_id;
            if map.insert(id, rec).is_some() {
                return Err(Error::data(format!("duplicate location_id {id} in metadata")));
            }
        }
        Ok(MetadataDB {
            records: map,
            background_text: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: u32) -> Result<&LocationMeta> {
        self.records.get(&id).ok_or(Error::UnknownLocation(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &LocationMeta> {
        self.records.values()
    }

    /// Every location in the store must have a metadata record.
    pub fn check_coverage(&self, store: &TimeSeriesStore) -> Result<()> {
        for &id in store.location_ids() {
            if !self.records.contains_key(&id) {
                return Err(Error::data(format!(
                    "location_id {id} present in the time series store but missing from metadata"
                )));
            }
        }
        Ok(())
    }

    /// Fill missing `historical_total_volume` as the train-range sum of the
    /// store series. Returns how many records were filled.
    pub fn fill_missing_volumes(
        &mut self,
        store: &TimeSeriesStore,
        train_range: &Range<usize>,
    ) -> Result<usize> {
        let mut filled = 0;
        for rec in self.records.values_mut() {
            if rec.historical_total_volume.is_none() && store.contains(rec.location_id) {
                let row = store.row_index(rec.location_id)?;
                let sum: f64 = store.row(row)[train_range.clone()].iter().sum();
                rec.historical_total_volume = Some(sum.round().max(0.0) as u64);
                filled += 1;
            }
        }
        Ok(filled)
    }

    /// Dataset background for prompts: the stored text, or a default rendered
    /// from the store's shape when none was supplied.
    pub fn background(&self, store: &TimeSeriesStore, templates: &TemplateSet) -> Result<String> {
        if !self.background_text.trim().is_empty() {
            return Ok(self.background_text.trim_end().to_string());
        }
        let min_id = store.location_ids().iter().min().copied().unwrap_or(0);
        let max_id = store.location_ids().iter().max().copied().unwrap_or(0);
        templates.render(
            "background_default",
            &[
                ("n_locations", &group_thousands(store.n_locations() as u64)),
                ("min_id", &min_id.to_string()),
                ("max_id", &group_thousands(max_id as u64)),
            ],
        )
    }
}

fn render_details(meta: &LocationMeta, annotation: Option<Annotation>, templates: &TemplateSet) -> Result<String> {
    let volume = meta
        .historical_total_volume
        .map(|v| v.to_string())
        .unwrap_or_else(|| "unknown".to_string());
    let id = meta.location_id.to_string();
    let mut text = match annotation {
        Some(ann) => templates.render(
            "location_base_annotated",
            &[
                ("id", id.as_str()),
                ("annotation", ann.render().as_str()),
                ("volume", volume.as_str()),
                ("city", meta.city.as_str()),
                ("county", meta.county.as_str()),
            ],
        )?,
        None => templates.render(
            "location_base",
            &[
                ("id", id.as_str()),
                ("volume", volume.as_str()),
                ("city", meta.city.as_str()),
                ("county", meta.county.as_str()),
            ],
        )?,
    };
    if let Some(pop) = meta.population {
        text.push_str(&templates.render(
            "location_population",
            &[("city", meta.city.as_str()), ("population", group_thousands(pop).as_str())],
        )?);
    }
    match meta.lanes {
        Some(lanes) => text.push_str(&templates.render(
            "location_freeway",
            &[("freeway", meta.freeway.as_str()), ("lanes", lanes.to_string().as_str())],
        )?),
        None => text.push_str(
            &templates.render("location_freeway_no_lanes", &[("freeway", meta.freeway.as_str())])?,
        ),
    }
    Ok(text)
}

/// One-paragraph description of a location, mirroring the prompt wording.
pub fn render_location(db: &MetadataDB, id: u32, templates: &TemplateSet) -> Result<String> {
    render_details(db.get(id)?, None, templates)
}

/// Like [`render_location`] but with the retrieval annotation inserted after
/// the id, as neighbor entries appear in prompts.
pub fn render_neighbor_entry(
    db: &MetadataDB,
    id: u32,
    annotation: Annotation,
    templates: &TemplateSet,
) -> Result<String> {
    render_details(db.get(id)?, Some(annotation), templates)
}

/// Load metadata from CSV with header
/// `location_id,latitude,longitude,city,county,population,freeway,lanes,historical_total_volume`.
/// Empty population/lanes/volume fields mean "unknown".
pub fn load_metadata(path: &Path) -> Result<MetadataDB> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 9 {
            return Err(Error::data(format!(
                "metadata row {row_no}: expected 9 fields, got {}",
                record.len()
            )));
        }
        let parse_f64 = |idx: usize, name: &str| -> Result<f64> {
            record[idx].trim().parse().map_err(|_| {
                Error::data(format!("metadata row {row_no}: invalid {name} `{}`", &record[idx]))
            })
        };
        let opt_u64 = |idx: usize, name: &str| -> Result<Option<u64>> {
            let field = record[idx].trim();
            if field.is_empty() {
                Ok(None)
            } else {
                field.parse().map(Some).map_err(|_| {
                    Error::data(format!("metadata row {row_no}: invalid {name} `{field}`"))
                })
            }
        };
        let meta = LocationMeta {
            location_id: record[0].trim().parse().map_err(|_| {
                Error::data(format!("metadata row {row_no}: invalid location_id `{}`", &record[0]))
            })?,
            latitude: parse_f64(1, "latitude")?,
            longitude: parse_f64(2, "longitude")?,
            city: record[3].trim().to_string(),
            county: record[4].trim().to_string(),
            population: opt_u64(5, "population")?,
            freeway: record[6].trim().to_string(),
            lanes: opt_u64(7, "lanes")?.map(|v| v as u32),
            historical_total_volume: opt_u64(8, "historical_total_volume")?,
        };
        meta.validate()
            .map_err(|e| Error::data(format!("metadata row {row_no}: {e}")))?;
        records.push(meta);
    }
    MetadataDB::new(records)
}

/// Write metadata CSV in the load format.
pub fn write_metadata(db: &MetadataDB, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "location_id,latitude,longitude,city,county,population,freeway,lanes,historical_total_volume"
    )?;
    for m in db.iter() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            m.location_id,
            m.latitude,
            m.longitude,
            m.city,
            m.county,
            m.population.map(|v| v.to_string()).unwrap_or_default(),
            m.freeway,
            m.lanes.map(|v| v.to_string()).unwrap_or_default(),
            m.historical_total_volume.map(|v| v.to_string()).unwrap_or_default(),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn campbell() -> LocationMeta {
        LocationMeta {
            location_id: 1201,
            latitude: 37.2872,
            longitude: -121.9500,
            city: "Campbell".into(),
            county: "Santa Clara".into(),
            population: Some(41700),
            freeway: "SR87-N".into(),
            lanes: Some(3),
            historical_total_volume: Some(2229867),
        }
    }

    fn san_jose() -> LocationMeta {
        LocationMeta {
            location_id: 1205,
            latitude: 37.33,
            longitude: -121.89,
            city: "San Jose".into(),
            county: "Santa Clara".into(),
            population: Some(969655),
            freeway: "SR87-N".into(),
            lanes: Some(2),
            historical_total_volume: Some(2598232),
        }
    }

    #[test]
    fn render_location_matches_prompt_wording() {
        let db = MetadataDB::new(vec![campbell()]).unwrap();
        let text = render_location(&db, 1201, &TemplateSet::builtin()).unwrap();
        assert_eq!(
            text,
            "location_id=1201, historical_total_volume=2229867. This location is in Campbell, \
             a city located in Santa Clara County, California. Campbell has a population of \
             approximately 41,700 residents. The location is on freeway SR87-N, which has 3 lanes."
        );
    }

    #[test]
    fn render_neighbor_entry_inserts_annotation() {
        let db = MetadataDB::new(vec![san_jose()]).unwrap();
        let text =
            render_neighbor_entry(&db, 1205, Annotation::Similarity(0.9849), &TemplateSet::builtin())
                .unwrap();
        assert!(
            text.starts_with("location_id=1205, similarity=0.9849, historical_total_volume=2598232."),
            "{text}"
        );
        assert!(text.contains("San Jose has a population of approximately 969,655 residents"));
    }

    #[test]
    fn annotation_formatting() {
        assert_eq!(Annotation::Similarity(1.0).render(), "similarity=1.0000");
        assert_eq!(Annotation::DistanceKm(3.25).render(), "distance=3.25km");
    }

    #[test]
    fn optional_fields_render_as_omitted_sentences() {
        let mut m = campbell();
        m.population = None;
        m.lanes = None;
        let db = MetadataDB::new(vec![m]).unwrap();
        let text = render_location(&db, 1201, &TemplateSet::builtin()).unwrap();
        assert!(!text.contains("population"));
        assert!(!text.contains("lanes"));
        assert!(text.ends_with("The location is on freeway SR87-N."));
    }

    #[test]
    fn unknown_id_is_a_lookup_error() {
        let db = MetadataDB::new(vec![campbell()]).unwrap();
        assert!(render_location(&db, 999, &TemplateSet::builtin()).is_err());
    }

    #[test]
    fn out_of_range_coordinates_rejected() {
        let mut m = campbell();
        m.latitude = 123.0;
        assert!(MetadataDB::new(vec![m]).is_err());
    }

    #[test]
    fn duplicate_id_rejected() {
        assert!(MetadataDB::new(vec![campbell(), campbell()]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let db = MetadataDB::new(vec![campbell(), san_jose()]).unwrap();
        let dir = std::env::temp_dir().join("dcats-meta-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("meta.csv");
        write_metadata(&db, &path).unwrap();
        let back = load_metadata(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.get(1201).unwrap(), &campbell());
        assert_eq!(back.get(1205).unwrap().historical_total_volume, Some(2598232));
    }

    #[test]
    fn fill_missing_volumes_uses_train_sum() {
        let store = TimeSeriesStore::new(vec![(1201, vec![10.0, 20.0, 30.0, 40.0])], 15, 2).unwrap();
        let mut m = campbell();
        m.location_id = 1201;
        m.historical_total_volume = None;
        let mut db = MetadataDB::new(vec![m]).unwrap();
        let filled = db.fill_missing_volumes(&store, &(0..3)).unwrap();
        assert_eq!(filled, 1);
        assert_eq!(db.get(1201).unwrap().historical_total_volume, Some(60));
    }
}
