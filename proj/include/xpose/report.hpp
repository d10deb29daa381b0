#pragma once

#include <string>
#include <vector>

#include "xpose/bench.hpp"

namespace xpose {

// Transfer-report CSV: a '#' metadata line with the shared fields, then one
// row per (white_box, attack) pair and one column per black box, each cell
// "transformed (baseline)". Cells are blank where a report has no row for
// that black box. Numbers are shortest-round-trip so parse(emit(reports))
// restores the values losslessly.
std::string transfer_to_csv(const std::vector<TransferReport>& reports);
std::vector<TransferReport> transfer_from_csv(const std::string& csv);

std::string sweep_to_csv(const SweepCurve& curve);
SweepCurve sweep_from_csv(const std::string& csv);

// Self-contained SVG: one polyline per black box (skipped for one-point
// curves), an argmax dot per curve, axes labelled "rotation angle (deg)" and
// "success rate (%)".
std::string sweep_to_svg(const std::vector<SweepCurve>& curves);

// Binary PPM (P6). img must be [1, h, w, 1|3]; grayscale is replicated.
void write_ppm(const std::string& path, const Tensor& img);

std::string format_double(double v);  // shortest round-trip form

}  // namespace xpose
