// Copyright 2026 The zhprobe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Builds probing instances from a handful of sentence pairs, trains the
// reference bigram model on a small corpus, and prints the result table.

#include <fstream>
#include <iostream>
#include <string>

#include "zhprobe/zhprobe.hpp"

int main(int argc, char** argv) {
  using namespace zhprobe;
  const std::string dir = argc > 1 ? argv[1] : ZHPROBE_SAMPLE_DATA;

  std::ifstream pairs_file(dir + "/pairs.tsv");
  std::ifstream corpus_file(dir + "/corpus.txt");
  if (!pairs_file || !corpus_file) {
    std::cerr << "sample data not found under " << dir << '\n';
    return 1;
  }

  const ParsedPairs parsed = parse_pairs(pairs_file);
  const BuildResult built = build_instances(parsed.pairs);
  write_stats_tsv(std::cout, built.stats);
  std::cout << '\n';

  const NgramPredictor model = NgramPredictor::train(corpus_file, 2);
  LocalExecutor executor(model);
  const ProbeRun run = run_probe(built.instances, executor);
  for (const auto& [id, why] : run.errors) std::cerr << id << ": " << why << '\n';

  write_table_text(std::cout, {{"bigram", run.table}});
  return 0;
}
