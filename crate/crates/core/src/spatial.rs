//! Spatial operators over map objects.
//!
//! Distances are planar Euclidean between object centroids; operators
//! without an object id argument measure from the ego vehicle at the origin.
//! Direction filters are strict (objects exactly on an axis belong to
//! neither side), range filters are inclusive, and every tie is broken by
//! ascending object id.

use std::fmt;

use thiserror::Error;

use crate::map::{MapObject, ObjectId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpatialError {
    #[error("unknown object id {0}")]
    UnknownObject(ObjectId),
    #[error("{operator}: {message}")]
    InvalidArgument { operator: &'static str, message: String },
    #[error("{operator}: {message}")]
    ArgumentType { operator: &'static str, message: String },
}

/// Objects in a defined order, without duplicate ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectSet<'a>(pub Vec<&'a MapObject>);

impl<'a> ObjectSet<'a> {
    pub fn from_objects(objs: &'a [MapObject]) -> Self {
        Self::sorted_by_id(objs.iter().collect())
    }

    pub fn sorted_by_id(mut objs: Vec<&'a MapObject>) -> Self {
        objs.sort_by_key(|o| o.object_id);
        objs.dedup_by_key(|o| o.object_id);
        Self(objs)
    }

    pub fn ids(&self) -> Vec<ObjectId> {
        self.0.iter().map(|o| o.object_id).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a MapObject> + '_ {
        self.0.iter().copied()
    }

    pub fn find(&self, id: ObjectId) -> Option<&'a MapObject> {
        self.iter().find(|o| o.object_id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpatialValue<'a> {
    Objects(ObjectSet<'a>),
    Distance(f64),
    Object(&'a MapObject),
}

impl SpatialValue<'_> {
    pub fn kind(&self) -> ValueKind {
        match self {
            SpatialValue::Objects(_) => ValueKind::Objects,
            SpatialValue::Distance(_) => ValueKind::Distance,
            SpatialValue::Object(_) => ValueKind::Object,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Objects,
    Distance,
    Object,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::Objects => "object list",
            ValueKind::Distance => "distance",
            ValueKind::Object => "object",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Front,
    Left,
    Right,
    Rear,
}

impl Direction {
    fn holds(&self, o: &MapObject) -> bool {
        match self {
            Direction::Front => o.x() > 0.0,
            Direction::Rear => o.x() < 0.0,
            Direction::Left => o.y() > 0.0,
            Direction::Right => o.y() < 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Anchor<'a> {
    Ego,
    Object(&'a MapObject),
}

impl Anchor<'_> {
    /// Squared planar distance; comparisons use it so that equal distances
    /// on a regular lattice tie exactly.
    fn distance2(&self, o: &MapObject) -> f64 {
        let (ax, ay) = match self {
            Anchor::Ego => (0.0, 0.0),
            Anchor::Object(a) => a.position,
        };
        let (dx, dy) = (o.x() - ax, o.y() - ay);
        dx * dx + dy * dy
    }

    fn excludes(&self, o: &MapObject) -> bool {
        matches!(self, Anchor::Object(a) if a.object_id == o.object_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    Closest,
    Farthest,
}

pub fn directional_filter<'a>(direction: Direction, objs: &ObjectSet<'a>) -> ObjectSet<'a> {
    ObjectSet::sorted_by_id(objs.iter().filter(|o| direction.holds(o)).collect())
}

pub fn range_filter<'a>(objs: &ObjectSet<'a>, anchor: Anchor<'_>, max_dist: f64) -> ObjectSet<'a> {
    ObjectSet::sorted_by_id(
        objs.iter()
            .filter(|o| !anchor.excludes(o) && anchor.distance2(o) <= max_dist * max_dist)
            .collect(),
    )
}

pub fn k_select<'a>(objs: &ObjectSet<'a>, anchor: Anchor<'_>, k: usize, extreme: Extreme) -> ObjectSet<'a> {
    let mut ranked: Vec<(f64, &'a MapObject)> = objs
        .iter()
        .filter(|o| !anchor.excludes(o))
        .map(|o| (anchor.distance2(o), o))
        .collect();
    ranked.sort_by(|a, b| {
        let by_metric = match extreme {
            Extreme::Closest => a.0.total_cmp(&b.0),
            Extreme::Farthest => b.0.total_cmp(&a.0),
        };
        by_metric.then(a.1.object_id.cmp(&b.1.object_id))
    });
    ranked.dedup_by_key(|(_, o)| o.object_id);
    ObjectSet(ranked.into_iter().take(k).map(|(_, o)| o).collect())
}

pub fn obj_distance(target: &MapObject) -> f64 {
    target.range()
}

pub fn find_dist(a: &MapObject, b: &MapObject) -> f64 {
    a.distance_to(b)
}

/// Parameter kinds of the operator signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    /// An object list: `objs` or a nested call returning objects.
    Objects,
    /// An object id (integer).
    Id,
    /// A non-negative count (integer).
    Count,
    /// Meters (integer or decimal).
    Meters,
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Param::Objects => "object list",
            Param::Id => "object id",
            Param::Count => "count",
            Param::Meters => "distance in meters",
        })
    }
}

/// The twelve operators the LLM may call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    FrontFilter,
    LeftFilter,
    RightFilter,
    RearFilter,
    DistFilter,
    KClosest,
    KFarthest,
    ObjsInDist,
    KClosestToObj,
    KFarthestToObj,
    ObjDistance,
    FindDist,
}

pub struct OperatorSpec {
    pub op: Operator,
    pub name: &'static str,
    pub params: &'static [(&'static str, Param)],
    pub returns: ValueKind,
    pub description: &'static str,
}

use Param::*;

pub const REGISTRY: [OperatorSpec; 12] = [
    OperatorSpec { op: Operator::FrontFilter, name: "front_filter", params: &[("objs", Objects)], returns: ValueKind::Objects, description: "objects to the front" },
    OperatorSpec { op: Operator::LeftFilter, name: "left_filter", params: &[("objs", Objects)], returns: ValueKind::Objects, description: "objects to the left" },
    OperatorSpec { op: Operator::RightFilter, name: "right_filter", params: &[("objs", Objects)], returns: ValueKind::Objects, description: "objects to the right" },
    OperatorSpec { op: Operator::RearFilter, name: "rear_filter", params: &[("objs", Objects)], returns: ValueKind::Objects, description: "objects to the rear" },
    OperatorSpec { op: Operator::DistFilter, name: "dist_filter", params: &[("objs", Objects), ("X", Meters)], returns: ValueKind::Objects, description: "objects within X m of the ego vehicle" },
    OperatorSpec { op: Operator::KClosest, name: "k_closest", params: &[("objs", Objects), ("k", Count)], returns: ValueKind::Objects, description: "k closest objects to the ego vehicle" },
    OperatorSpec { op: Operator::KFarthest, name: "k_farthest", params: &[("objs", Objects), ("k", Count)], returns: ValueKind::Objects, description: "k farthest objects from the ego vehicle" },
    OperatorSpec { op: Operator::ObjsInDist, name: "objs_in_dist", params: &[("objs", Objects), ("id", Id), ("dist", Meters)], returns: ValueKind::Objects, description: "objects within dist m of object id" },
    OperatorSpec { op: Operator::KClosestToObj, name: "k_closest_to_obj", params: &[("objs", Objects), ("id", Id), ("k", Count)], returns: ValueKind::Objects, description: "k closest objects to object id" },
    OperatorSpec { op: Operator::KFarthestToObj, name: "k_farthest_to_obj", params: &[("objs", Objects), ("id", Id), ("k", Count)], returns: ValueKind::Objects, description: "k farthest objects from object id" },
    OperatorSpec { op: Operator::ObjDistance, name: "obj_distance", params: &[("objs", Objects), ("id", Id)], returns: ValueKind::Distance, description: "distance in m from the ego vehicle to object id" },
    OperatorSpec { op: Operator::FindDist, name: "find_dist", params: &[("objs", Objects), ("id1", Id), ("id2", Id)], returns: ValueKind::Distance, description: "distance in m between objects id1 and id2" },
];

impl Operator {
    pub fn from_name(name: &str) -> Option<Operator> {
        REGISTRY.iter().find(|s| s.name == name).map(|s| s.op)
    }

    pub fn spec(&self) -> &'static OperatorSpec {
        REGISTRY
            .iter()
            .find(|s| s.op == *self)
            .expect("every operator is registered")
    }

    pub fn name(&self) -> &'static str {
        self.spec().name
    }
}

/// An evaluated argument.
#[derive(Debug, Clone, PartialEq)]
pub enum ArgValue<'a> {
    Objects(ObjectSet<'a>),
    Int(i64),
    Float(f64),
}

fn resolve(universe: &[MapObject], id: ObjectId) -> Result<&MapObject, SpatialError> {
    universe
        .iter()
        .find(|o| o.object_id == id)
        .ok_or(SpatialError::UnknownObject(id))
}

impl Operator {
    /// Applies the operator. Object ids resolve against `universe` (the whole
    /// map), so an anchor need not survive an inner filter.
    pub fn apply<'a>(
        &self,
        args: Vec<ArgValue<'a>>,
        universe: &'a [MapObject],
    ) -> Result<SpatialValue<'a>, SpatialError> {
        let spec = self.spec();
        let name = spec.name;
        let invalid = |message: String| SpatialError::InvalidArgument { operator: name, message };
        let mistyped = |message: String| SpatialError::ArgumentType { operator: name, message };
        if args.len() != spec.params.len() {
            return Err(mistyped(format!(
                "expected {} arguments, got {}",
                spec.params.len(),
                args.len()
            )));
        }
        let mut objs = None;
        let mut ids = Vec::new();
        let mut count = None;
        let mut meters = None;
        for ((pname, param), arg) in spec.params.iter().zip(args) {
            match (param, arg) {
                (Param::Objects, ArgValue::Objects(set)) => objs = Some(set),
                (Param::Id, ArgValue::Int(v)) => {
                    let id = ObjectId::try_from(v).map_err(|_| SpatialError::UnknownObject(v.max(0) as ObjectId))?;
                    ids.push(resolve(universe, id)?);
                }
                (Param::Count, ArgValue::Int(v)) => {
                    count = Some(usize::try_from(v).map_err(|_| invalid(format!("{pname} must be non-negative, got {v}")))?)
                }
                (Param::Meters, ArgValue::Int(v)) => meters = Some(v as f64),
                (Param::Meters, ArgValue::Float(v)) => meters = Some(v),
                (p, a) => return Err(mistyped(format!("{pname} expects a {p}, got {a:?}"))),
            }
        }
        if let Some(m) = meters {
            if !(m.is_finite() && m >= 0.0) {
                return Err(invalid(format!("distance must be finite and non-negative, got {m}")));
            }
        }
        let objs = objs.expect("first parameter is always objs");
        let value = match self {
            Operator::FrontFilter => SpatialValue::Objects(directional_filter(Direction::Front, &objs)),
            Operator::LeftFilter => SpatialValue::Objects(directional_filter(Direction::Left, &objs)),
            Operator::RightFilter => SpatialValue::Objects(directional_filter(Direction::Right, &objs)),
            Operator::RearFilter => SpatialValue::Objects(directional_filter(Direction::Rear, &objs)),
            Operator::DistFilter => SpatialValue::Objects(range_filter(&objs, Anchor::Ego, meters.unwrap())),
            Operator::KClosest => SpatialValue::Objects(k_select(&objs, Anchor::Ego, count.unwrap(), Extreme::Closest)),
            Operator::KFarthest => SpatialValue::Objects(k_select(&objs, Anchor::Ego, count.unwrap(), Extreme::Farthest)),
            Operator::ObjsInDist => SpatialValue::Objects(range_filter(&objs, Anchor::Object(ids[0]), meters.unwrap())),
            Operator::KClosestToObj => {
                SpatialValue::Objects(k_select(&objs, Anchor::Object(ids[0]), count.unwrap(), Extreme::Closest))
            }
            Operator::KFarthestToObj => {
                SpatialValue::Objects(k_select(&objs, Anchor::Object(ids[0]), count.unwrap(), Extreme::Farthest))
            }
            Operator::ObjDistance => SpatialValue::Distance(obj_distance(ids[0])),
            Operator::FindDist => SpatialValue::Distance(find_dist(ids[0], ids[1])),
        };
        Ok(value)
    }
}
