#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include "tlm/train.hpp"

TLM_BEGIN_NAMESPACE

namespace fs = std::filesystem;

std::string GridCell::key() const {
  if (baseline) return "baseline";
  std::string k = std::string(toString(task)) + "_" + toString(mask) + "_" + (noise ? "noise" : "clean") + "_" +
                  toString(schedule);
  return k;
}

std::vector<GridCell> gridCells() {
  std::vector<GridCell> cells;
  for (ReconTask task : {ReconTask::LM, ReconTask::AE})
    for (SourceMask mask : {SourceMask::Triangular, SourceMask::Full})
      for (bool noise : {false, true})
        for (ScheduleKind s : {ScheduleKind::Const0, ScheduleKind::Const1, ScheduleKind::TwoStepLinear,
                               ScheduleKind::Exponential})
          cells.push_back({false, task, mask, noise, s});
  GridCell base;
  base.baseline = true;
  cells.push_back(base);
  return cells;
}

std::string gridHeader() { return "task\tmask\tnoise\tschedule\tbleu\tdevPPL"; }

std::string formatGridRow(const GridRow& r) {
  char nums[64];
  if (r.error.empty())
    std::snprintf(nums, sizeof nums, "%.2f\t%.4f", r.bleu, r.devPpl);
  else
    std::snprintf(nums, sizeof nums, "failed\tfailed");
  if (r.cell.baseline) return std::string("enc-dec\t-\t-\t-\t") + nums;
  return std::string(toString(r.cell.task)) + "\t" + toString(r.cell.mask) + "\t" + (r.cell.noise ? "yes" : "no") +
         "\t" + toString(r.cell.schedule) + "\t" + nums;
}

namespace {

// A finished cell file holds the header line and one formatted row.
bool readCell(const fs::path& path, GridRow& row) {
  std::ifstream in(path);
  std::string header, line;
  if (!std::getline(in, header) || header != gridHeader() || !std::getline(in, line)) return false;
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (cols.size() != 6) return false;
  if (cols[4] == "failed") return false;  // retry failures on rerun
  try {
    row.bleu = std::stod(cols[4]);
    row.devPpl = std::stod(cols[5]);
  } catch (const std::exception&) {
    return false;
  }
  return formatGridRow(row) == line;
}

GridRow runCell(const GridCell& cell, const GridOptions& opts, const Corpus& train, std::span<const SentencePair> dev,
                std::span<const SentencePair> test, const Vocab& vocab) {
  GridRow row{cell, 0, 0, {}};
  ModelConfig mc = cell.baseline ? opts.baselineModel : opts.tlmModel;
  mc.arch = cell.baseline ? Architecture::EncDec : Architecture::EncOnly;
  mc.vocabSize = vocab.size();
  TrainOptions to = opts.train;
  if (!cell.baseline) {
    mc.sourceMask = cell.mask;
    to.example.task = cell.task;
    to.example.noise = cell.noise;
    to.schedule.kind = cell.schedule;
  } else {
    to.example.noise = false;
    to.schedule.kind = ScheduleKind::Const0;
    to.batch.monoRatio = 0;
  }
  Model model(mc, to.seed);
  TrainResult tr = trainLoop(model, train, dev, vocab, to);
  const Model& best = tr.best ? *tr.best : model;
  row.devPpl = tr.bestDevPpl;
  row.bleu = evaluateBleu(best, test, vocab, opts.beam).bleu;
  return row;
}

}  // namespace

std::vector<GridRow> gridSearch(const GridOptions& opts, const Corpus& train, std::span<const SentencePair> dev,
                                std::span<const SentencePair> test, const Vocab& vocab, std::ostream* progress) {
  if (test.empty()) throw DataError("grid search needs a non-empty test set");
  const std::vector<GridCell> cells = gridCells();
  std::vector<GridRow> rows(cells.size());
  std::vector<bool> done(cells.size(), false);
  fs::path cellDir;
  if (!opts.runDir.empty()) {
    cellDir = fs::path(opts.runDir) / "cells";
    fs::create_directories(cellDir);
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    rows[i].cell = cells[i];
    if (!cellDir.empty() && readCell(cellDir / (cells[i].key() + ".tsv"), rows[i])) done[i] = true;
  }

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next++;
      if (i >= cells.size()) return;
      if (done[i]) {
        std::lock_guard<std::mutex> lock(mu);
        if (progress) *progress << "resumed " << cells[i].key() << '\n' << std::flush;
        continue;
      }
      GridRow row;
      try {
        row = runCell(cells[i], opts, train, dev, test, vocab);
      } catch (const std::exception& e) {
        row.cell = cells[i];
        row.error = e.what();
      }
      std::lock_guard<std::mutex> lock(mu);
      rows[i] = row;
      if (!cellDir.empty()) {
        std::ofstream out(cellDir / (cells[i].key() + ".tsv"));
        out << gridHeader() << '\n' << formatGridRow(row) << '\n';
      }
      if (progress) {
        *progress << "cell " << cells[i].key() << ": ";
        if (row.error.empty())
          *progress << "bleu " << row.bleu << " devPPL " << row.devPpl << '\n';
        else
          *progress << "failed: " << row.error << '\n';
        *progress << std::flush;
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, cells.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return rows;
}

TLM_END_NAMESPACE
