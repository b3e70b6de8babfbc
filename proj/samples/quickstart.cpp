// Library walkthrough: listing -> instructions -> features -> classifier.
//
//   quickstart [listing.s]
//
// Without an argument it uses two tiny built-in listings.

#include <fstream>
#include <iostream>
#include <sstream>

#include "provenance/provenance.hpp"

using namespace provenance;

namespace {

constexpr const char* kFramePointerStyle = R"(
a.out:     file format elf32-littlearm

Disassembly of section .text:

000200ec <f>:
   200ec:	e92d4800 	push	{fp, lr}
   200f0:	e1a0b00d 	mov	fp, sp
   200f4:	e24dd010 	sub	sp, sp, #16
   200f8:	e50b0004 	str	r0, [fp, #-4]
   200fc:	e51b1004 	ldr	r1, [fp, #-4]
   20100:	e1500001 	cmp	r0, r1
   20104:	e8bd8800 	pop	{fp, pc}
)";

constexpr const char* kLeafStyle = R"(
   200d4:	e92d4010 	push	{r4, lr}
   200d8:	e2506000 	subs	r6, r0, #0
   200dc:	e0255097 	mla	r5, r7, r0, r5
   200e0:	e1a00005 	mov	r0, r5
   200e4:	e8bd8010 	pop	{r4, pc}
)";

void show(const BinaryFeatures& b) {
  std::cout << "instructions: " << b.terms.instruction_count << "  fp/sp ratio: " << b.profile.fp_sp_ratio << "\n";
  std::cout << "  dst:";
  for (const auto& [r, f] : b.profile.dst_freq) std::cout << ' ' << r << '=' << f;
  std::cout << "\n  src:";
  for (const auto& [r, f] : b.profile.src_freq) std::cout << ' ' << r << '=' << f;
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) {
    std::ifstream in(argv[1]);
    std::stringstream ss;
    ss << in.rdbuf();
    const auto b = extract_features(Listing{Isa::Arm32, ss.str()});
    show(b);
    return 0;
  }

  const auto a = extract_features(Listing{Isa::Arm32, kFramePointerStyle});
  const auto b = extract_features(Listing{Isa::Arm32, kLeafStyle});
  show(a);
  show(b);

  // Fit TF-IDF on both "binaries" and train a two-class model.
  const std::vector<BinaryFeatures> corpus = {a, b};
  const std::vector<std::string> labels = {"-O0", "-O2"};
  const TaskModel task = train_task(corpus, labels, TrainConfig{});
  std::cout << "predicted: " << task.predict(a) << " " << task.predict(b) << "\n";
  for (const auto& w : top_weights(std::get<LinearModel>(task.classifier), task.layout.names, 3))
    std::cout << "  " << w.feature << " " << w.weight << "\n";
}
