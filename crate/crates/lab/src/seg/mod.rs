//! Synthetic pixel-classification lab.

mod adapt;
mod model;
mod scene;
mod train;

pub use adapt::{hard_pseudo_labels, pseudo_labels, self_train, smooth_pseudo_label, RoundReport, SelfTrainConfig};
pub use model::SoftmaxModel;
pub use scene::{generate_scene, nearest_prototype, SceneConfig, SceneSample};
pub use train::{batch_loss_grad, evaluate, onehot_targets, train, PixelTarget, SegLoss, TrainConfig};

use serde::{Deserialize, Serialize};
use sevot::ground::build_severity_matrix;
use sevot::GroundMatrix;

pub const N_CLASSES: usize = 8;
pub const FEATURE_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Class {
    Sky = 0,
    Road = 1,
    Sidewalk = 2,
    Building = 3,
    Car = 4,
    Bus = 5,
    Person = 6,
    Bike = 7,
}

impl Class {
    pub const ALL: [Class; N_CLASSES] = [
        Class::Sky,
        Class::Road,
        Class::Sidewalk,
        Class::Building,
        Class::Car,
        Class::Bus,
        Class::Person,
        Class::Bike,
    ];
    pub const BACKGROUND: [Class; 4] = [Class::Sky, Class::Road, Class::Sidewalk, Class::Building];
    pub const OBJECTS: [Class; 4] = [Class::Car, Class::Bus, Class::Person, Class::Bike];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(k: usize) -> Option<Class> {
        Class::ALL.get(k).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Sky => "sky",
            Class::Road => "road",
            Class::Sidewalk => "sidewalk",
            Class::Building => "building",
            Class::Car => "car",
            Class::Bus => "bus",
            Class::Person => "person",
            Class::Bike => "bike",
        }
    }

    pub fn is_object(self) -> bool {
        Class::OBJECTS.contains(&self)
    }

    fn is_vehicle(self) -> bool {
        matches!(self, Class::Car | Class::Bus)
    }

    /// Prototype feature color. Road, car and bus lie on one line, as do
    /// sidewalk, person and bike, so neighbours along each line get confused.
    pub fn prototype(self) -> [f64; FEATURE_DIM] {
        match self {
            Class::Sky => [0.1, 1.5, 1.6],
            Class::Road => [0.5, 0.5, 0.5],
            Class::Sidewalk => [1.0, 0.7, 0.4],
            Class::Building => [1.6, 0.1, 0.2],
            Class::Car => [0.5, 0.5, 0.8],
            Class::Bus => [0.5, 0.5, 1.1],
            Class::Person => [1.0, 0.7, 0.7],
            Class::Bike => [1.0, 0.7, 1.0],
        }
    }
}

/// Severity matrix for the palette, row = predicted, column = true class.
///
/// Missing an object by calling it background costs 5, confusing two vehicles
/// or two vulnerable road users costs 1, a vehicle for a pedestrian costs 2,
/// and everything else costs 1.
pub fn severity_matrix() -> GroundMatrix {
    let mut entries = Vec::new();
    for obj in Class::OBJECTS {
        for bg in Class::BACKGROUND {
            entries.push((bg.index(), obj.index(), 5.0));
        }
        for other in Class::OBJECTS {
            if other != obj {
                let cost = if other.is_vehicle() == obj.is_vehicle() {
                    1.0
                } else {
                    2.0
                };
                entries.push((other.index(), obj.index(), cost));
            }
        }
    }
    build_severity_matrix(N_CLASSES, &entries, 1.0).expect("static entries are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn severity_is_asymmetric_for_missed_objects() {
        let d = severity_matrix();
        let (road, person) = (Class::Road.index(), Class::Person.index());
        assert_eq!(d.get(road, person), 5.0);
        assert_eq!(d.get(person, road), 1.0);
        assert_eq!(d.get(Class::Bus.index(), Class::Car.index()), 1.0);
        assert_eq!(d.get(Class::Car.index(), Class::Person.index()), 2.0);
    }

    #[test]
    fn index_round_trip() {
        for c in Class::ALL {
            assert_eq!(Class::from_index(c.index()), Some(c));
        }
        assert_eq!(Class::from_index(N_CLASSES), None);
    }
}
