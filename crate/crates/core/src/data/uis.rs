//! Synthetic heterogeneous person data in the style of the UIS dirty-data
//! generator: two tables over the same people whose schemas disagree
//! because different attribute pairs were merged on each side.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::{CandidatePair, EntityRecord};
use crate::error::{Error, Result};

pub const UIS_ATTRIBUTES: [&str; 5] = ["name", "address", "city", "state", "zip"];

/// Replaces attributes `first` and `second` with a single attribute
/// `new_name` at the position of `first`, value `first + " " + second`.
pub fn merge_attributes(
    record: &EntityRecord,
    first: &str,
    second: &str,
    new_name: &str,
) -> Result<EntityRecord> {
    if first == second {
        return Err(Error::Argument(format!("cannot merge `{first}` with itself")));
    }
    let missing = |n: &str| Error::Argument(format!("record `{}` has no attribute `{n}`", record.id));
    let a = record.get(first).ok_or_else(|| missing(first))?;
    let b = record.get(second).ok_or_else(|| missing(second))?;
    let merged = format!("{a} {b}");
    let attrs = record.attributes().iter().filter_map(|(n, v)| {
        if n == first {
            Some((new_name.to_string(), merged.clone()))
        } else if n == second {
            None
        } else {
            Some((n.clone(), v.clone()))
        }
    });
    EntityRecord::new(record.id.clone(), attrs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UisOptions {
    /// Number of non-matching pairs to sample across distinct base records.
    pub negatives: usize,
    /// Per-attribute probability of a dirty edit on each side.
    pub noise: f64,
    /// Fraction of negatives drawn among records sharing a state.
    pub hard_negative_fraction: f64,
}

impl Default for UisOptions {
    fn default() -> Self {
        Self {
            negatives: 0,
            noise: 0.3,
            hard_negative_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UisTables {
    pub table_a: Vec<EntityRecord>,
    pub table_b: Vec<EntityRecord>,
    pub pairs: Vec<CandidatePair>,
}

const ABBREVIATIONS: [(&str, &str); 8] = [
    ("Street", "St"),
    ("Avenue", "Ave"),
    ("Road", "Rd"),
    ("Drive", "Dr"),
    ("Lane", "Ln"),
    ("Boulevard", "Blvd"),
    ("Court", "Ct"),
    ("North", "N"),
];

fn typo(value: &str, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = value.chars().collect();
    if chars.len() < 2 {
        return value.to_string();
    }
    let i = rng.random_range(0..chars.len() - 1);
    match rng.random_range(0..4) {
        0 => {
            chars.remove(i);
        }
        1 => chars.swap(i, i + 1),
        2 => {
            let c = (b'a' + rng.random_range(0..26u8)) as char;
            chars.insert(i, c);
        }
        _ => chars[i] = (b'a' + rng.random_range(0..26u8)) as char,
    }
    chars.into_iter().collect()
}

fn dirty(name: &str, value: &str, rng: &mut ChaCha8Rng) -> String {
    match name {
        "address" => {
            for (long, short) in ABBREVIATIONS {
                if value.contains(long) && rng.random_bool(0.6) {
                    return value.replacen(long, short, 1);
                }
            }
            typo(value, rng)
        }
        "name" => {
            let parts: Vec<&str> = value.split_whitespace().collect();
            match (parts.as_slice(), rng.random_range(0..3)) {
                ([first, last], 0) => format!("{}. {last}", first.chars().next().unwrap_or('X')),
                ([first, last], 1) => format!("{last}, {first}"),
                _ => typo(value, rng),
            }
        }
        "state" => value.to_string(),
        _ => typo(value, rng),
    }
}

fn perturb(base: &EntityRecord, id: String, noise: f64, rng: &mut ChaCha8Rng) -> Result<EntityRecord> {
    let attrs: Vec<(String, String)> = base
        .attributes()
        .iter()
        .map(|(n, v)| {
            let v = if noise > 0.0 && rng.random_bool(noise) {
                dirty(n, v, rng)
            } else {
                v.clone()
            };
            (n.clone(), v)
        })
        .collect();
    EntityRecord::new(id, attrs)
}

/// Derives the two heterogeneous tables and labeled pairs from base person
/// records. Table A merges (address, city) into `address_city`; table B
/// merges (city, state) into `city_state`. Base record `i` yields `a{i}` and
/// `b{i}`, linked by a positive pair.
pub fn generate_uis_tables(
    base_records: &[EntityRecord],
    options: &UisOptions,
    seed: u64,
) -> Result<UisTables> {
    if !(0.0..=1.0).contains(&options.noise) || !(0.0..=1.0).contains(&options.hard_negative_fraction) {
        return Err(Error::Argument("noise and hard_negative_fraction must lie in [0, 1]".into()));
    }
    for r in base_records {
        for a in UIS_ATTRIBUTES {
            if r.get(a).is_none() {
                return Err(Error::Schema(format!("base record `{}` lacks `{a}`", r.id)));
            }
        }
    }
    let n = base_records.len();
    let max_negatives = n.saturating_mul(n.saturating_sub(1));
    if options.negatives > max_negatives {
        return Err(Error::Generation(format!(
            "requested {} negatives but {n} base records allow at most {max_negatives}",
            options.negatives
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table_a = Vec::with_capacity(n);
    let mut table_b = Vec::with_capacity(n);
    for (i, base) in base_records.iter().enumerate() {
        let a = perturb(base, format!("a{i}"), options.noise, &mut rng)?;
        let b = perturb(base, format!("b{i}"), options.noise, &mut rng)?;
        table_a.push(merge_attributes(&a, "address", "city", "address_city")?);
        table_b.push(merge_attributes(&b, "city", "state", "city_state")?);
    }

    let mut pairs: Vec<CandidatePair> = (0..n)
        .map(|i| CandidatePair::labeled(table_a[i].clone(), table_b[i].clone(), true))
        .collect();

    // Group by state so hard negatives share a location.
    let mut by_state: std::collections::BTreeMap<&str, Vec<usize>> = Default::default();
    for (i, r) in base_records.iter().enumerate() {
        by_state.entry(r.get("state").unwrap_or("")).or_default().push(i);
    }
    let state_of: Vec<&str> = base_records.iter().map(|r| r.get("state").unwrap_or("")).collect();

    let negatives: Vec<(usize, usize)> = if 2 * options.negatives > max_negatives {
        // Dense request: sample without replacement from the full grid.
        let mut all: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        all.shuffle(&mut rng);
        all.truncate(options.negatives);
        all
    } else {
        let mut chosen: HashSet<(usize, usize)> = HashSet::with_capacity(options.negatives);
        let mut out = Vec::with_capacity(options.negatives);
        while out.len() < options.negatives {
            let i = rng.random_range(0..n);
            let group = &by_state[state_of[i]];
            let j = if group.len() > 1 && rng.random_bool(options.hard_negative_fraction) {
                *group.choose(&mut rng).expect("non-empty group")
            } else {
                rng.random_range(0..n)
            };
            // Hard groups can saturate; fall through to uniform draws then.
            if i != j && chosen.insert((i, j)) {
                out.push((i, j));
            }
        }
        out
    };
    pairs.extend(
        negatives
            .into_iter()
            .map(|(i, j)| CandidatePair::labeled(table_a[i].clone(), table_b[j].clone(), false)),
    );
    // Interleave positives and negatives deterministically.
    pairs.shuffle(&mut rng);

    Ok(UisTables {
        table_a,
        table_b,
        pairs,
    })
}

const FIRST_NAMES: [&str; 48] = [
    "James", "Mary", "John", "Patricia", "Robert", "Jennifer", "Michael", "Linda", "William",
    "Elizabeth", "David", "Barbara", "Richard", "Susan", "Joseph", "Jessica", "Thomas", "Sarah",
    "Charles", "Karen", "Christopher", "Nancy", "Daniel", "Lisa", "Matthew", "Betty", "Anthony",
    "Margaret", "Mark", "Sandra", "Donald", "Ashley", "Steven", "Kimberly", "Paul", "Emily",
    "Andrew", "Donna", "Joshua", "Michelle", "Kenneth", "Dorothy", "Kevin", "Carol", "Brian",
    "Amanda", "George", "Melissa",
];

const LAST_NAMES: [&str; 48] = [
    "Smith", "Johnson", "Williams", "Brown", "Jones", "Garcia", "Miller", "Davis", "Rodriguez",
    "Martinez", "Hernandez", "Lopez", "Gonzalez", "Wilson", "Anderson", "Thomas", "Taylor",
    "Moore", "Jackson", "Martin", "Lee", "Perez", "Thompson", "White", "Harris", "Sanchez",
    "Clark", "Ramirez", "Lewis", "Robinson", "Walker", "Young", "Allen", "King", "Wright",
    "Scott", "Torres", "Nguyen", "Hill", "Flores", "Green", "Adams", "Nelson", "Baker", "Hall",
    "Rivera", "Campbell", "Mitchell",
];

const STREETS: [&str; 32] = [
    "Elm", "Oak", "Maple", "Cedar", "Pine", "Walnut", "Washington", "Lake", "Hill", "Park",
    "Main", "Sunset", "Highland", "Jefferson", "Lincoln", "Madison", "Franklin", "River",
    "Church", "Spring", "Willow", "Meadow", "Forest", "Ridge", "Valley", "Chestnut", "Mill",
    "Center", "Adams", "Jackson", "Prospect", "Union",
];

const STREET_TYPES: [&str; 7] = ["Street", "Avenue", "Road", "Drive", "Lane", "Boulevard", "Court"];

const PLACES: [(&str, &str, u32); 30] = [
    ("Ames", "IA", 500),
    ("Des Moines", "IA", 503),
    ("Cedar Rapids", "IA", 524),
    ("Madison", "WI", 537),
    ("Milwaukee", "WI", 532),
    ("Green Bay", "WI", 543),
    ("Chicago", "IL", 606),
    ("Springfield", "IL", 627),
    ("Peoria", "IL", 616),
    ("Columbus", "OH", 432),
    ("Cleveland", "OH", 441),
    ("Dayton", "OH", 454),
    ("Austin", "TX", 787),
    ("Dallas", "TX", 752),
    ("Houston", "TX", 770),
    ("Portland", "OR", 972),
    ("Eugene", "OR", 974),
    ("Salem", "OR", 973),
    ("Denver", "CO", 802),
    ("Boulder", "CO", 803),
    ("Albany", "NY", 122),
    ("Buffalo", "NY", 142),
    ("Rochester", "NY", 146),
    ("Phoenix", "AZ", 850),
    ("Tucson", "AZ", 857),
    ("Atlanta", "GA", 303),
    ("Savannah", "GA", 314),
    ("Boise", "ID", 837),
    ("Omaha", "NE", 681),
    ("Lincoln", "NE", 685),
];

/// Draws `count` clean base person records with the five UIS attributes.
pub fn synthesize_people(count: usize, seed: u64) -> Vec<EntityRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let first = FIRST_NAMES.choose(&mut rng).unwrap();
            let last = LAST_NAMES.choose(&mut rng).unwrap();
            let street = STREETS.choose(&mut rng).unwrap();
            let kind = STREET_TYPES.choose(&mut rng).unwrap();
            let number = rng.random_range(1..9999);
            let (city, state, zip3) = PLACES.choose(&mut rng).unwrap();
            let zip = format!("{zip3:03}{:02}", rng.random_range(0..100));
            EntityRecord::new(
                format!("p{i}"),
                [
                    ("name", format!("{first} {last}")),
                    ("address", format!("{number} {street} {kind}")),
                    ("city", city.to_string()),
                    ("state", state.to_string()),
                    ("zip", zip),
                ],
            )
            .expect("fixed schema")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn person() -> EntityRecord {
        EntityRecord::new(
            "p",
            [
                ("name", "Ann Lee"),
                ("address", "12 Elm St"),
                ("city", "Ames"),
                ("state", "IA"),
                ("zip", "50010"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn merge_concatenates_with_a_space_in_place() {
        let m = merge_attributes(&person(), "address", "city", "address_city").unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.names().collect::<Vec<_>>(), ["name", "address_city", "state", "zip"]);
        assert_eq!(m.get("address_city"), Some("12 Elm St Ames"));
    }

    #[test]
    fn merge_requires_both_attributes() {
        let r = EntityRecord::new("x", [("address", "a"), ("city", "b")]).unwrap();
        assert!(matches!(
            merge_attributes(&r, "city", "state", "cs"),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn tables_are_four_by_four() {
        let base = synthesize_people(50, 1);
        let opts = UisOptions {
            negatives: 100,
            ..Default::default()
        };
        let t = generate_uis_tables(&base, &opts, 9).unwrap();
        assert!(t.table_a.iter().all(|r| r.len() == 4));
        assert!(t.table_b.iter().all(|r| r.len() == 4));
        assert_eq!(t.pairs.len(), 150);
        assert_eq!(t.pairs.iter().filter(|p| p.is_positive()).count(), 50);
        for p in &t.pairs {
            let same_base = p.left.id[1..] == p.right.id[1..];
            assert_eq!(same_base, p.is_positive());
        }
        assert_ne!(
            t.table_a[0].names().collect::<Vec<_>>(),
            t.table_b[0].names().collect::<Vec<_>>()
        );
    }

    #[test]
    fn single_base_single_positive() {
        let t = generate_uis_tables(&[person()], &UisOptions::default(), 0).unwrap();
        assert_eq!(t.pairs.len(), 1);
        assert!(t.pairs[0].is_positive());
    }

    #[test]
    fn deterministic_in_seed() {
        let base = synthesize_people(30, 4);
        let opts = UisOptions {
            negatives: 60,
            ..Default::default()
        };
        let a = generate_uis_tables(&base, &opts, 5).unwrap();
        let b = generate_uis_tables(&base, &opts, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(synthesize_people(30, 4), base);
    }

    #[test]
    fn missing_base_attribute_is_schema_error() {
        let r = EntityRecord::new("x", [("name", "a")]).unwrap();
        assert!(matches!(
            generate_uis_tables(&[r], &UisOptions::default(), 0),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn dense_negative_request_is_satisfied_or_rejected() {
        let base = synthesize_people(4, 2);
        let full = UisOptions {
            negatives: 12,
            ..Default::default()
        };
        assert_eq!(generate_uis_tables(&base, &full, 0).unwrap().pairs.len(), 16);
        let over = UisOptions {
            negatives: 13,
            ..Default::default()
        };
        assert!(matches!(generate_uis_tables(&base, &over, 0), Err(Error::Generation(_))));
    }
}
