#pragma once

#include "provenance/corpus.hpp"
#include "provenance/disasm.hpp"
#include "provenance/elf.hpp"
#include "provenance/error.hpp"
#include "provenance/features.hpp"
#include "provenance/hierarchy.hpp"
#include "provenance/learn.hpp"
#include "provenance/parallel.hpp"
