//! Feature schemas: which columns feed the model and how they embed.

use serde::{Deserialize, Serialize};

/// Embedding rule for one feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Single real column; `standardize` subtracts the training mean and
    /// divides by the training standard deviation. Binary indicators are
    /// passed through unstandardized.
    Numeric { standardize: bool },
    /// One-hot block of the given cardinality.
    OneHot(usize),
}

/// Where a feature's raw values come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSource {
    /// Numeric CSV column.
    Column(String),
    /// Integer-coded categorical CSV column.
    CatColumn(String),
    /// Hour of day, 0..=23.
    Hour,
    /// Day of week, Monday = 0.
    DayOfWeek,
    /// Month of year, January = 0.
    MonthOfYear,
    /// Meteorological season from the month: DJF, MAM, JJA, SON.
    Season,
    /// 1 on Monday..Friday, 0 on weekends.
    WeekdayFlag,
    /// 1 on dates in the user-supplied holiday list.
    HolidayFlag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
    pub source: FeatureSource,
}

impl FeatureDef {
    pub fn width(&self) -> usize {
        match self.kind {
            FeatureKind::Numeric { .. } => 1,
            FeatureKind::OneHot(c) => c,
        }
    }
}

/// Ordered feature descriptors; the embedded width is the sum of the
/// per-feature widths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub name: String,
    pub defs: Vec<FeatureDef>,
}

fn num(name: &str, source: FeatureSource, standardize: bool) -> FeatureDef {
    FeatureDef {
        name: name.to_string(),
        kind: FeatureKind::Numeric { standardize },
        source,
    }
}

fn onehot(name: &str, source: FeatureSource, cardinality: usize) -> FeatureDef {
    FeatureDef {
        name: name.to_string(),
        kind: FeatureKind::OneHot(cardinality),
        source,
    }
}

fn calendar_block() -> Vec<FeatureDef> {
    vec![
        onehot("season", FeatureSource::Season, 4),
        onehot("hour_of_day", FeatureSource::Hour, 24),
        onehot("day_of_week", FeatureSource::DayOfWeek, 7),
        onehot("month_of_year", FeatureSource::MonthOfYear, 12),
    ]
}

impl FeatureSchema {
    /// ISO New England control-area schema: day-ahead demand, two
    /// temperatures, weekday/holiday indicators and calendar one-hots.
    /// Embedded width 52.
    pub fn iso_ne() -> Self {
        let mut defs = vec![
            num("da_demand", FeatureSource::Column("da_demand".into()), true),
            num("dry_bulb", FeatureSource::Column("dry_bulb".into()), true),
            num("dew_pnt", FeatureSource::Column("dew_pnt".into()), true),
            num("weekday", FeatureSource::WeekdayFlag, false),
            num("holiday", FeatureSource::HolidayFlag, false),
        ];
        defs.extend(calendar_block());
        FeatureSchema {
            name: "iso-ne".into(),
            defs,
        }
    }

    /// North-American Utility schema: temperature, holiday indicator and
    /// calendar one-hots. Embedded width 49.
    pub fn nau() -> Self {
        let mut defs = vec![
            num("temperature", FeatureSource::Column("temperature".into()), true),
            num("holiday", FeatureSource::HolidayFlag, false),
        ];
        defs.extend(calendar_block());
        FeatureSchema {
            name: "nau".into(),
            defs,
        }
    }

    /// Schema for the bundled synthetic generator: one informative
    /// temperature feature, one pure-noise feature, hour and day-of-week
    /// one-hots. Embedded width 33.
    pub fn synth() -> Self {
        FeatureSchema {
            name: "synth".into(),
            defs: vec![
                num("temperature", FeatureSource::Column("temperature".into()), true),
                num("noise", FeatureSource::Column("noise".into()), true),
                onehot("hour_of_day", FeatureSource::Hour, 24),
                onehot("day_of_week", FeatureSource::DayOfWeek, 7),
            ],
        }
    }

    /// User-defined numeric columns, optional integer-coded categorical
    /// columns, and optionally the standard calendar block.
    pub fn custom(
        numeric_columns: &[String],
        categorical_columns: &[(String, usize)],
        include_calendar: bool,
    ) -> Self {
        let mut defs: Vec<FeatureDef> = numeric_columns
            .iter()
            .map(|c| num(c, FeatureSource::Column(c.clone()), true))
            .collect();
        for (c, card) in categorical_columns {
            defs.push(onehot(c, FeatureSource::CatColumn(c.clone()), *card));
        }
        if include_calendar {
            defs.push(num("weekday", FeatureSource::WeekdayFlag, false));
            defs.push(num("holiday", FeatureSource::HolidayFlag, false));
            defs.extend(calendar_block());
        }
        FeatureSchema {
            name: "custom".into(),
            defs,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "iso-ne" => Some(Self::iso_ne()),
            "nau" => Some(Self::nau()),
            "synth" => Some(Self::synth()),
            _ => None,
        }
    }

    /// Total embedded width n.
    pub fn width(&self) -> usize {
        self.defs.iter().map(|d| d.width()).sum()
    }

    /// Numeric CSV columns this schema reads.
    pub fn csv_numeric_columns(&self) -> Vec<&str> {
        self.defs
            .iter()
            .filter_map(|d| match &d.source {
                FeatureSource::Column(c) => Some(c.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Categorical CSV columns this schema reads.
    pub fn csv_categorical_columns(&self) -> Vec<&str> {
        self.defs
            .iter()
            .filter_map(|d| match &d.source {
                FeatureSource::CatColumn(c) => Some(c.as_str()),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_widths_match_the_published_schemas() {
        assert_eq!(FeatureSchema::iso_ne().width(), 52);
        assert_eq!(FeatureSchema::nau().width(), 49);
        assert_eq!(FeatureSchema::synth().width(), 33);
    }

    #[test]
    fn custom_width_sums_parts() {
        let s = FeatureSchema::custom(
            &["a".into(), "b".into()],
            &[("c".into(), 5)],
            true,
        );
        // 2 numeric + 5 one-hot + 2 flags + 4 + 24 + 7 + 12 calendar.
        assert_eq!(s.width(), 2 + 5 + 2 + 47);
    }
}
