use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number system of the hidden layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    #[serde(rename = "quat")]
    Quaternion,
}

impl Field {
    pub fn as_str(self) -> &'static str {
        match self {
            Field::Real => "real",
            Field::Quaternion => "quat",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Field::Real),
            "quat" | "quaternion" => Ok(Field::Quaternion),
            other => Err(Error::Config(format!("unknown field `{other}` (real|quat)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    Cifar100,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Cifar100 => "cifar100",
        }
    }

    pub fn classes(self) -> usize {
        match self {
            DatasetKind::Mnist | DatasetKind::Cifar10 => 10,
            DatasetKind::Cifar100 => 100,
        }
    }

    /// Per-example image extents `[channels, height, width]` as stored on disk.
    pub fn image_dims(self) -> [usize; 3] {
        match self {
            DatasetKind::Mnist => [1, 28, 28],
            DatasetKind::Cifar10 | DatasetKind::Cifar100 => [3, 32, 32],
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "cifar10" => Ok(DatasetKind::Cifar10),
            "cifar100" => Ok(DatasetKind::Cifar100),
            other => Err(Error::Config(format!(
                "unknown dataset `{other}` (mnist|cifar10|cifar100)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Lenet300,
    Lenet12,
    Conv2,
    Conv4,
    Conv6,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Lenet300,
        Architecture::Lenet12,
        Architecture::Conv2,
        Architecture::Conv4,
        Architecture::Conv6,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Lenet300 => "lenet300",
            Architecture::Lenet12 => "lenet12",
            Architecture::Conv2 => "conv2",
            Architecture::Conv4 => "conv4",
            Architecture::Conv6 => "conv6",
        }
    }

    /// Datasets each architecture was trained on.
    pub fn datasets(self) -> &'static [DatasetKind] {
        match self {
            Architecture::Lenet300 | Architecture::Lenet12 => &[DatasetKind::Mnist],
            Architecture::Conv2 => &[DatasetKind::Cifar10],
            Architecture::Conv4 | Architecture::Conv6 => {
                &[DatasetKind::Cifar10, DatasetKind::Cifar100]
            }
        }
    }

    /// Default dataset (the first listed one).
    pub fn default_dataset(self) -> DatasetKind {
        self.datasets()[0]
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model `{s}` (lenet300|lenet12|conv2|conv4|conv6)"
                ))
            })
    }
}

/// One step of a convolutional trunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvItem {
    /// 3x3 same-padded convolution with this many real output channels.
    Conv(usize),
    /// 2x2 max pooling, stride 2.
    Pool,
}

/// Declarative model description. Widths are always given in real units;
/// quaternion variants use a quarter as many quaternion units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub dataset: DatasetKind,
    pub field: Field,
    pub conv_plan: Vec<ConvItem>,
    /// Hidden fully-connected widths; the output layer is implied.
    pub fc_plan: Vec<usize>,
    pub classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl ModelSpec {
    pub fn preset(arch: Architecture, dataset: DatasetKind, field: Field) -> Result<Self> {
        if !arch.datasets().contains(&dataset) {
            return Err(Error::Config(format!(
                "{arch} is not defined for {dataset} (supported: {})",
                arch.datasets()
                    .iter()
                    .map(|d| d.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
        use ConvItem::{Conv, Pool};
        let (conv_plan, fc_plan, epochs, lr) = match arch {
            Architecture::Lenet300 => (vec![], vec![300, 100], 40, 1.2e-3),
            Architecture::Lenet12 => (vec![], vec![12], 40, 1.2e-3),
            Architecture::Conv2 => (vec![Conv(64), Conv(64), Pool], vec![256, 256], 40, 2e-4),
            Architecture::Conv4 => (
                vec![Conv(64), Conv(64), Pool, Conv(128), Conv(128), Pool],
                vec![256, 256],
                40,
                3e-4,
            ),
            Architecture::Conv6 => (
                vec![
                    Conv(64),
                    Conv(64),
                    Pool,
                    Conv(128),
                    Conv(128),
                    Pool,
                    Conv(256),
                    Conv(256),
                    Pool,
                ],
                vec![256, 256],
                60,
                3e-4,
            ),
        };
        let spec = ModelSpec {
            name: arch.as_str().to_string(),
            dataset,
            field,
            conv_plan,
            fc_plan,
            classes: dataset.classes(),
            epochs,
            batch_size: 60,
            learning_rate: lr,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.field == Field::Quaternion {
            let widths = self
                .conv_plan
                .iter()
                .filter_map(|c| match c {
                    ConvItem::Conv(w) => Some(*w),
                    ConvItem::Pool => None,
                })
                .chain(self.fc_plan.iter().copied());
            for w in widths {
                if w % 4 != 0 {
                    return Err(Error::Config(format!(
                        "quaternion model `{}` has hidden width {w}, not divisible by 4",
                        self.name
                    )));
                }
            }
        }
        if self.fc_plan.contains(&0)
            || self.conv_plan.contains(&ConvItem::Conv(0))
        {
            return Err(Error::Config(format!(
                "model `{}` has a zero-width layer",
                self.name
            )));
        }
        if self.classes == 0 {
            return Err(Error::Config("model needs at least one class".into()));
        }
        Ok(())
    }

    pub fn is_convolutional(&self) -> bool {
        !self.conv_plan.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let s = ModelSpec::preset(Architecture::Conv6, DatasetKind::Cifar10, Field::Real).unwrap();
        assert_eq!((s.epochs, s.batch_size, s.learning_rate), (60, 60, 3e-4));
        let s = ModelSpec::preset(Architecture::Lenet300, DatasetKind::Mnist, Field::Real).unwrap();
        assert_eq!((s.epochs, s.batch_size, s.learning_rate), (40, 60, 1.2e-3));
        let s = ModelSpec::preset(Architecture::Conv2, DatasetKind::Cifar10, Field::Real).unwrap();
        assert_eq!((s.epochs, s.batch_size, s.learning_rate), (40, 60, 2e-4));
        let s = ModelSpec::preset(Architecture::Conv4, DatasetKind::Cifar100, Field::Real).unwrap();
        assert_eq!((s.epochs, s.batch_size, s.learning_rate, s.classes), (40, 60, 3e-4, 100));
    }

    #[test]
    fn unsupported_pairs_and_names() {
        assert!(ModelSpec::preset(Architecture::Conv2, DatasetKind::Mnist, Field::Real).is_err());
        assert!(matches!("resnet18".parse::<Architecture>(), Err(Error::Config(_))));
        assert!(matches!("complex".parse::<Field>(), Err(Error::Config(_))));
    }

    #[test]
    fn quaternion_width_must_divide_by_four() {
        let mut s =
            ModelSpec::preset(Architecture::Lenet12, DatasetKind::Mnist, Field::Quaternion).unwrap();
        s.fc_plan = vec![10];
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        s.field = Field::Real;
        assert!(s.validate().is_ok());
    }
}
