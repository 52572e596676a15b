//! Errors carried to the process exit code.

use std::fmt;

use holant::apexdp::ApexDpError;
use holant::classify::ClassifyError;
use holant::instance::InstanceError;
use holant::pathgadget::PathGadgetError;
use holant::planar::PlanarError;
use holant::reductions::ReductionError;
use holant::scg::ScgError;
use holant::treewidth::TreewidthError;
use holant::{ScalarError, SignatureError};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_CAP: u8 = 3;
pub const EXIT_MISMATCH: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
    /// Full report for verification mismatches.
    pub report: Option<serde_json::Value>,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Failure { code: EXIT_VALIDATION, message: message.into(), report: None }
    }

    pub fn mismatch(message: impl Into<String>) -> Self {
        Failure { code: EXIT_MISMATCH, message: message.into(), report: None }
    }

    pub fn mismatch_report(report: serde_json::Value) -> Self {
        Failure { code: EXIT_MISMATCH, message: "verification mismatch".into(), report: Some(report) }
    }

    pub fn kind(&self) -> &'static str {
        match self.code {
            EXIT_CAP => "cap",
            EXIT_MISMATCH => "mismatch",
            _ => "validation",
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Whether an error is a resource cap rather than bad input.
pub trait IsCap {
    fn is_cap(&self) -> bool;
}

impl IsCap for InstanceError {
    fn is_cap(&self) -> bool {
        matches!(self, InstanceError::Cap { .. } | InstanceError::Signature(SignatureError::ArityCap(_)))
    }
}

impl IsCap for SignatureError {
    fn is_cap(&self) -> bool {
        matches!(self, SignatureError::ArityCap(_))
    }
}

impl IsCap for ScalarError {
    fn is_cap(&self) -> bool {
        false
    }
}

impl IsCap for PlanarError {
    fn is_cap(&self) -> bool {
        match self {
            PlanarError::Cap { .. } => true,
            PlanarError::Instance(e) => e.is_cap(),
            _ => false,
        }
    }
}

impl IsCap for TreewidthError {
    fn is_cap(&self) -> bool {
        match self {
            TreewidthError::WidthCap { .. } => true,
            TreewidthError::Instance(e) => e.is_cap(),
            _ => false,
        }
    }
}

impl IsCap for PathGadgetError {
    fn is_cap(&self) -> bool {
        matches!(self, PathGadgetError::Instance(e) if e.is_cap())
    }
}

impl IsCap for ScgError {
    fn is_cap(&self) -> bool {
        match self {
            ScgError::Growth { .. } => true,
            ScgError::Planar(e) => e.is_cap(),
            ScgError::Treewidth(e) => e.is_cap(),
            ScgError::Instance(e) => e.is_cap(),
            ScgError::PathGadget(e) => e.is_cap(),
            _ => false,
        }
    }
}

impl IsCap for ApexDpError {
    fn is_cap(&self) -> bool {
        match self {
            ApexDpError::Cap { .. } | ApexDpError::BoundaryTooLarge { .. } => true,
            ApexDpError::Planar(e) => e.is_cap(),
            ApexDpError::Treewidth(e) => e.is_cap(),
            ApexDpError::Instance(e) => e.is_cap(),
            ApexDpError::PathGadget(e) => e.is_cap(),
            ApexDpError::Scg(e) => e.is_cap(),
            _ => false,
        }
    }
}

impl IsCap for ClassifyError {
    fn is_cap(&self) -> bool {
        matches!(self, ClassifyError::ArityCap(_))
    }
}

impl IsCap for ReductionError {
    fn is_cap(&self) -> bool {
        match self {
            ReductionError::Cap { .. } => true,
            ReductionError::Instance(e) => e.is_cap(),
            ReductionError::Planar(e) => e.is_cap(),
            _ => false,
        }
    }
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                let code = if e.is_cap() { EXIT_CAP } else { EXIT_VALIDATION };
                Failure { code, message: e.to_string(), report: None }
            }
        }
    )*};
}

failure_from!(
    InstanceError,
    SignatureError,
    ScalarError,
    PlanarError,
    TreewidthError,
    ScgError,
    ApexDpError,
    ClassifyError,
    ReductionError
);

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::validation(e.to_string())
    }
}
