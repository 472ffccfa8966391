#pragma once

#include "scene/occupancy.hpp"

namespace bevfuse::metrics {

// Both metrics evaluate a centered square crop of side crop_m and accumulate
// over all future steps before dividing. Grid geometry must match exactly.

// Intersection over union of binarized occupancy.
double occupancy_iou(const scene::OccupancySequence& pred,
                     const scene::OccupancySequence& gt, double crop_m);

// Video panoptic quality: per step, instances match at IoU > 0.5 with
// temporally consistent identities; a matched pair whose predicted id was
// previously bound to a different ground-truth id counts as FP + FN.
// VPQ = sum_t sum_TP IoU / sum_t (|TP| + 0.5 |FP| + 0.5 |FN|).
double occupancy_vpq(const scene::OccupancySequence& pred,
                     const scene::OccupancySequence& gt, double crop_m);

}  // namespace bevfuse::metrics
