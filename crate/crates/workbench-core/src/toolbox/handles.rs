//! Episode-local handle store. Handle ids are sequential ("obj_1", "obj_2", …)
//! so traces replay reproducibly.

use std::collections::BTreeMap;

use super::result::{HandleKind, ObjectHandle};
use crate::volume::grid::{LabelMask, VoxelVolume};

/// An object a handle dereferences to.
#[derive(Debug, Clone)]
pub enum StoredObject {
    Image(VoxelVolume),
    Mask(LabelMask),
    Report(String),
}

impl StoredObject {
    pub fn kind(&self) -> HandleKind {
        match self {
            StoredObject::Image(_) => HandleKind::Image,
            StoredObject::Mask(_) => HandleKind::Mask,
            StoredObject::Report(_) => HandleKind::Report,
        }
    }
}

#[derive(Debug, Default)]
pub struct HandleStore {
    next: usize,
    objects: BTreeMap<String, (ObjectHandle, StoredObject)>,
}

impl HandleStore {
    pub fn new() -> Self {
        HandleStore::default()
    }

    pub fn issue(&mut self, origin: &str, object: StoredObject) -> ObjectHandle {
        self.next += 1;
        let handle = ObjectHandle {
            id: format!("obj_{}", self.next),
            kind: object.kind(),
            origin: origin.to_string(),
        };
        self.objects
            .insert(handle.id.clone(), (handle.clone(), object));
        handle
    }

    pub fn get(&self, id: &str) -> Option<&StoredObject> {
        self.objects.get(id).map(|(_, obj)| obj)
    }

    pub fn handle(&self, id: &str) -> Option<&ObjectHandle> {
        self.objects.get(id).map(|(h, _)| h)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}
