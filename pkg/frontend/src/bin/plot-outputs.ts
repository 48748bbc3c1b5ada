#!/usr/bin/env node
import { main } from "../cli";

process.exit(main("outputs", process.argv.slice(2)));
